#include "ccnet/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>

namespace ccnet {

template <typename T>
void adam_step(const NamedTensors<T>& params, const std::vector<Buffer<T>>& grads, AdamState<T>& state, double lr) {
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  if (!(lr > 0)) throw ConfigError("adam_step: lr must be positive");
  if (state.m.empty()) {
    for (const auto& [name, p] : params) {
      state.m.push_back(Buffer<T>::Zero(p.size()));
      state.v.push_back(Buffer<T>::Zero(p.size()));
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Index n = params[i].second.size();
    if (grads[i].size() != 0 && grads[i].size() != n) {
      throw DimensionError("adam_step: gradient of " + params[i].first + " has " + std::to_string(grads[i].size()) +
                           " entries, parameter has " + std::to_string(n));
    }
    if (state.m[i].size() != n || state.v[i].size() != n) {
      throw DimensionError("adam_step: moment buffers of " + params[i].first + " have the wrong size");
    }
  }

  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i].second;
    Buffer<T>& values = p.mutable_values();
    Buffer<T>& m = state.m[i];
    Buffer<T>& v = state.v[i];
    const bool has = grads[i].size() != 0;
    for (Index j = 0; j < values.size(); ++j) {
      const double g = has ? static_cast<double>(grads[i][j]) : 0.0;
      const double mj = state.beta1 * static_cast<double>(m[j]) + (1.0 - state.beta1) * g;
      const double vj = state.beta2 * static_cast<double>(v[j]) + (1.0 - state.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double step = lr * (mj / c1) / (std::sqrt(vj / c2) + state.eps);
      values[j] = static_cast<T>(static_cast<double>(values[j]) - step);
    }
  }
}

void TrainConfig::validate() const {
  if (!(lr_min > 0) || !(lr_min <= lr0)) throw ConfigError("train: need 0 < lr_min <= lr0");
  if (total_steps < 0) throw ConfigError("train: steps must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (gamma < 0) throw ConfigError("train: gamma must be >= 0");
  if (checkpoint_interval < 0) throw ConfigError("train: checkpoint_interval must be >= 0");
  if (grad_clip < 0) throw ConfigError("train: grad_clip must be >= 0");
  if (crop < 0) throw ConfigError("train: crop must be >= 0");
}

double cosine_lr(Index step, const TrainConfig& cfg) {
  if (cfg.total_steps < 1) throw std::out_of_range("cosine_lr: total_steps must be >= 1");
  if (step < 0 || step > cfg.total_steps) {
    throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(cfg.total_steps) + "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (1.0 + std::cos(phase));
}

std::string history_csv(const std::vector<LossRecord>& history) {
  std::string out = "step,lr,loss_mrae,loss_dif,loss_total\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step), r.lr, r.mrae,
                  r.dif, r.total);
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) { uint(v, 2); }
  void u32(std::uint64_t v) {
    if (v > 0xffffffffull) throw DimensionError("checkpoint: value exceeds 32 bits");
    uint(v, 4);
  }
  void u64(std::uint64_t v) { uint(v, 8); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v), 8); }
  void floats(const std::vector<float>& v) {
    for (float x : v) f32(x);
  }

  std::vector<std::uint8_t> bytes;

 private:
  void uint(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  }
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(uint(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(uint(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<float> floats(std::uint64_t n) {
    need(n * 4);
    std::vector<float> out(static_cast<std::size_t>(n));
    for (auto& x : out) x = f32();
    return out;
  }
  std::string str(std::uint64_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  // Guards allocations against sizes the remaining bytes cannot hold.
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw TruncatedError("checkpoint: truncated");
  }

 private:
  std::uint64_t uint(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void write_config(Writer& w, const ModelConfig& c) {
  for (Index v : {c.bands, c.in_channels, c.c_in, c.units, c.groups, c.window, c.patch, c.depth, c.blocks_per_level}) {
    w.u32(static_cast<std::uint64_t>(v));
  }
  w.u8(c.share_cmu ? 1 : 0);
  w.u64(c.seed);
}

ModelConfig read_config(Reader& r) {
  ModelConfig c;
  for (Index* f : {&c.bands, &c.in_channels, &c.c_in, &c.units, &c.groups, &c.window, &c.patch, &c.depth,
                   &c.blocks_per_level}) {
    *f = r.u32();
  }
  const std::uint8_t share = r.u8();
  if (share > 1) throw FormatError("checkpoint: bad share_cmu flag");
  c.share_cmu = share == 1;
  c.seed = r.u64();
  return c;
}

std::vector<float> to_floats(const Buffer<float>& b) { return {b.data(), b.data() + b.size()}; }
std::vector<float> to_floats(const Buffer<double>& b) {
  std::vector<float> out(static_cast<std::size_t>(b.size()));
  for (Index i = 0; i < b.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(b[i]);
  return out;
}

template <typename T>
Buffer<T> from_floats(const std::vector<float>& v) {
  Buffer<T> out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Index>(i)] = static_cast<T>(v[i]);
  return out;
}

}  // namespace

template <typename T>
Checkpoint make_checkpoint(const ModelConfig& cfg, CcnetParams<T>& params, const AdamState<T>* adam) {
  Checkpoint ckpt;
  ckpt.config = cfg;
  for (auto& [name, t] : params.named()) ckpt.tensors.push_back({name, t.shape(), to_floats(t.values())});
  if (adam != nullptr) {
    AdamRecord rec{adam->t, adam->beta1, adam->beta2, adam->eps, {}, {}};
    for (const auto& m : adam->m) rec.m.push_back(to_floats(m));
    for (const auto& v : adam->v) rec.v.push_back(to_floats(v));
    ckpt.adam = std::move(rec);
  }
  return ckpt;
}

void validate_checkpoint(const Checkpoint& ckpt) {
  ckpt.config.validate();
  auto reference = CcnetParams<float>::init(ckpt.config);
  std::map<std::string, Shape> expected;
  for (auto& [name, t] : reference.named()) expected.emplace(name, t.shape());
  std::map<std::string, const TensorRecord*> stored;
  for (const auto& rec : ckpt.tensors) {
    if (!stored.emplace(rec.name, &rec).second) throw FormatError("checkpoint: duplicate tensor " + rec.name);
  }
  for (const auto& [name, shape] : expected) {
    if (!stored.contains(name)) throw MissingParameterError("checkpoint: missing parameter " + name);
  }
  for (const auto& [name, rec] : stored) {
    const auto it = expected.find(name);
    if (it == expected.end()) throw UnknownParameterError("checkpoint: unknown parameter " + name);
    if (rec->shape != it->second) {
      throw DimensionError("checkpoint: " + name + " has shape " + shape_str(rec->shape) + ", model expects " +
                           shape_str(it->second));
    }
    if (static_cast<Index>(rec->data.size()) != numel(rec->shape)) {
      throw FormatError("checkpoint: " + name + " data does not match its shape");
    }
  }
  if (ckpt.adam) {
    const auto& a = *ckpt.adam;
    if (a.m.size() != ckpt.tensors.size() || a.v.size() != ckpt.tensors.size() || a.t < 0) {
      throw FormatError("checkpoint: optimizer state does not match the tensors");
    }
    for (std::size_t i = 0; i < a.m.size(); ++i) {
      if (a.m[i].size() != ckpt.tensors[i].data.size() || a.v[i].size() != ckpt.tensors[i].data.size()) {
        throw FormatError("checkpoint: optimizer moments of " + ckpt.tensors[i].name + " have the wrong size");
      }
    }
  }
}

template <typename T>
CcnetParams<T> restore_params(const Checkpoint& ckpt) {
  validate_checkpoint(ckpt);
  auto params = CcnetParams<T>::init(ckpt.config);
  std::map<std::string, const TensorRecord*> stored;
  for (const auto& rec : ckpt.tensors) stored.emplace(rec.name, &rec);
  params.visit("", [&](const std::string& name, Tensor<T>& t) {
    t.mutable_values() = from_floats<T>(stored.at(name)->data);
  });
  return params;
}

template <typename T>
AdamState<T> restore_adam(const Checkpoint& ckpt) {
  validate_checkpoint(ckpt);
  AdamState<T> state;
  if (!ckpt.adam) return state;
  // Moments follow the order of the stored tensors; reorder to the registry.
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) slot.emplace(ckpt.tensors[i].name, i);
  const auto& a = *ckpt.adam;
  state.t = a.t;
  state.beta1 = a.beta1;
  state.beta2 = a.beta2;
  state.eps = a.eps;
  auto reference = CcnetParams<T>::init(ckpt.config);
  for (const auto& [name, t] : reference.named()) {
    state.m.push_back(from_floats<T>(a.m[slot.at(name)]));
    state.v.push_back(from_floats<T>(a.v[slot.at(name)]));
  }
  return state;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  for (char c : {'C', 'C', 'K', 'P'}) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kCheckpointVersion);
  write_config(w, ckpt.config);
  w.u32(ckpt.tensors.size());
  for (const auto& rec : ckpt.tensors) {
    if (static_cast<Index>(rec.data.size()) != numel(rec.shape)) {
      throw DimensionError("checkpoint: " + rec.name + " data does not match its shape");
    }
    w.u32(rec.name.size());
    for (char c : rec.name) w.u8(static_cast<std::uint8_t>(c));
    w.u32(rec.shape.size());
    for (Index d : rec.shape) w.u32(static_cast<std::uint64_t>(d));
    w.floats(rec.data);
  }
  w.u8(ckpt.adam ? 1 : 0);
  if (ckpt.adam) {
    const auto& a = *ckpt.adam;
    if (a.m.size() != ckpt.tensors.size() || a.v.size() != ckpt.tensors.size()) {
      throw DimensionError("checkpoint: optimizer state does not match the tensors");
    }
    w.u64(static_cast<std::uint64_t>(a.t));
    w.f64(a.beta1);
    w.f64(a.beta2);
    w.f64(a.eps);
    for (std::size_t i = 0; i < a.m.size(); ++i) {
      if (a.m[i].size() != ckpt.tensors[i].data.size() || a.v[i].size() != ckpt.tensors[i].data.size()) {
        throw DimensionError("checkpoint: optimizer moments of " + ckpt.tensors[i].name + " have the wrong size");
      }
      w.floats(a.m[i]);
      w.floats(a.v[i]);
    }
  }
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4) throw TruncatedError("checkpoint: file too short for magic");
  if (r.str(4) != "CCKP") throw BadMagicError("checkpoint: bad magic");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint: version " + std::to_string(version) + ", expected " +
                               std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.config = read_config(r);
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord rec;
    rec.name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    r.need(4ull * rank);
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      rec.shape.push_back(dim);
      n *= dim;
      r.need(n * 4);
    }
    rec.data = r.floats(n);
    ckpt.tensors.push_back(std::move(rec));
  }
  const std::uint8_t has_adam = r.u8();
  if (has_adam > 1) throw FormatError("checkpoint: bad optimizer flag");
  if (has_adam == 1) {
    AdamRecord a;
    a.t = static_cast<std::int64_t>(r.u64());
    a.beta1 = r.f64();
    a.beta2 = r.f64();
    a.eps = r.f64();
    for (const auto& rec : ckpt.tensors) {
      a.m.push_back(r.floats(rec.data.size()));
      a.v.push_back(r.floats(rec.data.size()));
    }
    ckpt.adam = std::move(a);
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) { write_file(path, encode_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint ckpt = decode_checkpoint(read_file(path));
  try {
    ckpt.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: stored config is invalid: ") + e.what());
  }
  validate_checkpoint(ckpt);
  return ckpt;
}

// ---------------------------------------------------------------------------
// Training

namespace {

void check_pair(const CubePair& pair, const ModelConfig& cfg, std::size_t index) {
  const std::string where = "sample " + std::to_string(index) + ": ";
  if (pair.rgb.bands != cfg.in_channels) {
    throw DimensionError(where + "rgb has " + std::to_string(pair.rgb.bands) + " channels, model expects " +
                         std::to_string(cfg.in_channels));
  }
  if (pair.hsi.bands != cfg.bands) {
    throw DimensionError(where + "hsi has " + std::to_string(pair.hsi.bands) + " bands, model expects " +
                         std::to_string(cfg.bands));
  }
  if (pair.rgb.height != pair.hsi.height || pair.rgb.width != pair.hsi.width) {
    throw DimensionError(where + "rgb and hsi differ spatially");
  }
}

HsiCube crop_cube(const HsiCube& c, Index y0, Index x0, Index side) {
  HsiCube out{side, side, c.bands, c.wavelengths, std::vector<float>(static_cast<std::size_t>(side * side * c.bands))};
  for (Index b = 0; b < c.bands; ++b)
    for (Index y = 0; y < side; ++y)
      for (Index x = 0; x < side; ++x) out.at(b, y, x) = c.at(b, y0 + y, x0 + x);
  return out;
}

}  // namespace

TrainResult train_loop(const std::vector<CubePair>& dataset, const TrainConfig& cfg, const ModelConfig& model_cfg,
                       const CheckpointCallback& on_checkpoint, const ProgressCallback& on_step) {
  cfg.validate();
  model_cfg.validate();
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  for (std::size_t i = 0; i < dataset.size(); ++i) check_pair(dataset[i], model_cfg, i);

  auto params = CcnetParams<float>::init(model_cfg);
  const auto named = params.named();
  AdamState<float> adam;
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);

  for (Index step = 0; step < cfg.total_steps; ++step) {
    for (const auto& [name, p] : named) {
      Tensor<float> leaf = p;
      leaf.zero_grad();
    }
    LossRecord rec;
    rec.step = step;
    rec.lr = cosine_lr(step, cfg);
    for (Index b = 0; b < cfg.batch_size; ++b) {
      const std::size_t index = static_cast<std::size_t>(rng() % dataset.size());
      const std::uint64_t aug_seed = rng();
      CubePair pair = dataset[index];
      const Index side = std::min({cfg.crop, pair.hsi.height, pair.hsi.width});
      if (cfg.crop > 0) {
        const Index y0 = static_cast<Index>(rng() % static_cast<std::uint64_t>(pair.hsi.height - side + 1));
        const Index x0 = static_cast<Index>(rng() % static_cast<std::uint64_t>(pair.hsi.width - side + 1));
        pair = {crop_cube(pair.rgb, y0, x0, side), crop_cube(pair.hsi, y0, x0, side)};
      }
      if (cfg.augment) pair = augment(pair, aug_seed);
      const auto rgb = cube_to_tensor<float>(pair.rgb);
      const auto gt = cube_to_tensor<float>(pair.hsi);
      const auto pred = ccnet_forward(rgb, params, model_cfg);
      const auto terms = total_loss(pred, gt, LossWeights{cfg.gamma});
      backward(scale(terms.total, inv_batch));
      rec.mrae += terms.mrae.item();
      rec.dif += terms.dif.item();
      rec.total += terms.total.item();
    }
    rec.mrae /= static_cast<double>(cfg.batch_size);
    rec.dif /= static_cast<double>(cfg.batch_size);
    rec.total /= static_cast<double>(cfg.batch_size);

    std::vector<Buffer<float>> grads;
    double norm2 = 0;
    for (const auto& [name, p] : named) {
      grads.push_back(p.has_grad() ? p.grad() : Buffer<float>());
      norm2 += grads.back().template cast<double>().square().sum();
    }
    if (cfg.grad_clip > 0 && std::sqrt(norm2) > cfg.grad_clip) {
      const float factor = static_cast<float>(cfg.grad_clip / std::sqrt(norm2));
      for (auto& g : grads) g *= factor;
    }
    adam_step(named, grads, adam, rec.lr);
    result.history.push_back(rec);
    if (on_step) on_step(rec);
    if (on_checkpoint && cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0) {
      on_checkpoint(step + 1, make_checkpoint(model_cfg, params, &adam));
    }
  }
  for (const auto& [name, p] : named) {
    Tensor<float> leaf = p;
    leaf.zero_grad();
  }
  result.checkpoint = make_checkpoint(model_cfg, params, cfg.total_steps > 0 ? &adam : nullptr);
  return result;
}

HsiCube reconstruct(const CcnetParams<float>& params, const ModelConfig& cfg, const HsiCube& rgb) {
  if (rgb.bands != cfg.in_channels) {
    throw DimensionError("reconstruct: input has " + std::to_string(rgb.bands) + " channels, model expects " +
                         std::to_string(cfg.in_channels));
  }
  NoGradGuard guard;
  const auto pred = ccnet_forward(cube_to_tensor<float>(rgb), params, cfg);
  HsiCube out = tensor_to_cube(pred, visible_wavelengths(cfg.bands));
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

template void adam_step(const NamedTensors<float>&, const std::vector<Buffer<float>>&, AdamState<float>&, double);
template void adam_step(const NamedTensors<double>&, const std::vector<Buffer<double>>&, AdamState<double>&, double);
template Checkpoint make_checkpoint(const ModelConfig&, CcnetParams<float>&, const AdamState<float>*);
template Checkpoint make_checkpoint(const ModelConfig&, CcnetParams<double>&, const AdamState<double>*);
template CcnetParams<float> restore_params(const Checkpoint&);
template CcnetParams<double> restore_params(const Checkpoint&);
template AdamState<float> restore_adam(const Checkpoint&);
template AdamState<double> restore_adam(const Checkpoint&);

}  // namespace ccnet
