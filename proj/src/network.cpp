#include "ccnet/network.hpp"

#include <string>

#include "ccnet/layers.hpp"

namespace ccnet {

CsrmDims csrm_dims(const ModelConfig& cfg, Index level) {
  return {cfg.channels_at(level), cfg.c_in, cfg.groups, cfg.window, cfg.patch_at(level), cfg.share_cmu};
}

template <typename T>
FfnParams<T> FfnParams<T>::init(ParamFactory<T>& factory, Index channels) {
  FfnParams p;
  p.w1 = factory.weight({channels, 4 * channels}, channels);
  p.b1 = factory.zeros({4 * channels});
  p.w2 = factory.weight({4 * channels, channels}, 4 * channels);
  p.b2 = factory.zeros({channels});
  return p;
}

template <typename T>
void FfnParams<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(join_name(prefix, "w1"), w1);
  f(join_name(prefix, "b1"), b1);
  f(join_name(prefix, "w2"), w2);
  f(join_name(prefix, "b2"), b2);
}

template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& x, const FfnParams<T>& p) {
  return channel_map(gelu(channel_map(x, p.w1, p.b1)), p.w2, p.b2);
}

template <typename T>
CsrmParams<T> CsrmParams<T>::init(ParamFactory<T>& factory, const CsrmDims& dims) {
  CsrmParams p;
  p.norm1_g = factory.ones({dims.channels});
  p.norm1_b = factory.zeros({dims.channels});
  p.grscm = GrscmParams<T>::init(factory, dims.grscm());
  p.nescm = NescmParams<T>::init(factory, dims.nescm());
  p.paf = PafParams<T>::init(factory, dims.paf());
  p.norm2_g = factory.ones({dims.channels});
  p.norm2_b = factory.zeros({dims.channels});
  p.ffn = FfnParams<T>::init(factory, dims.channels);
  return p;
}

template <typename T>
void CsrmParams<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(join_name(prefix, "norm1_g"), norm1_g);
  f(join_name(prefix, "norm1_b"), norm1_b);
  grscm.visit(join_name(prefix, "grscm"), f);
  nescm.visit(join_name(prefix, "nescm"), f);
  paf.visit(join_name(prefix, "paf"), f);
  f(join_name(prefix, "norm2_g"), norm2_g);
  f(join_name(prefix, "norm2_b"), norm2_b);
  ffn.visit(join_name(prefix, "ffn"), f);
}

template <typename T>
Tensor<T> csrm_block_forward(const Tensor<T>& x, const CsrmParams<T>& p, const CsrmDims& dims) {
  Tensor<T> u = layer_norm(x, p.norm1_g, p.norm1_b);
  Tensor<T> attention = grscm_forward(u, p.grscm, dims.grscm());
  Tensor<T> progressive = nescm_forward(u, p.nescm, dims.nescm());
  Tensor<T> x1 = add(x, paf_fuse(attention, progressive, p.paf, dims.paf()));
  return add(x1, ffn_forward(layer_norm(x1, p.norm2_g, p.norm2_b), p.ffn));
}

namespace {

template <typename T>
std::vector<CsrmParams<T>> init_blocks(ParamFactory<T>& factory, const ModelConfig& cfg, Index level) {
  std::vector<CsrmParams<T>> blocks;
  for (Index b = 0; b < cfg.blocks_per_level; ++b) blocks.push_back(CsrmParams<T>::init(factory, csrm_dims(cfg, level)));
  return blocks;
}

template <typename T>
void visit_blocks(std::vector<CsrmParams<T>>& blocks, const std::string& prefix, const ParamVisitor<T>& f) {
  for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].visit(join_name(prefix, "b" + std::to_string(b)), f);
}

template <typename T>
Tensor<T> run_blocks(Tensor<T> x, const std::vector<CsrmParams<T>>& blocks, const CsrmDims& dims) {
  for (const auto& block : blocks) x = csrm_block_forward(x, block, dims);
  return x;
}

}  // namespace

template <typename T>
SruParams<T> SruParams<T>::init(ParamFactory<T>& factory, const ModelConfig& cfg) {
  SruParams p;
  for (Index l = 0; l < cfg.depth; ++l) {
    const Index c = cfg.channels_at(l);
    p.encoder.push_back(init_blocks(factory, cfg, l));
    p.down_w.push_back(factory.weight({2 * c, c, 3, 3}, 9 * c));
    p.down_b.push_back(factory.zeros({2 * c}));
  }
  p.bottleneck = init_blocks(factory, cfg, cfg.depth);
  p.decoder.resize(static_cast<std::size_t>(cfg.depth));
  p.up_w.resize(static_cast<std::size_t>(cfg.depth));
  p.up_b.resize(static_cast<std::size_t>(cfg.depth));
  p.skip_w.resize(static_cast<std::size_t>(cfg.depth));
  p.skip_b.resize(static_cast<std::size_t>(cfg.depth));
  for (Index l = cfg.depth - 1; l >= 0; --l) {
    const auto i = static_cast<std::size_t>(l);
    const Index c = cfg.channels_at(l);
    p.up_w[i] = factory.weight({2 * c, c, 2, 2}, 2 * c);
    p.up_b[i] = factory.zeros({c});
    p.skip_w[i] = factory.weight({2 * c, c}, 2 * c);
    p.skip_b[i] = factory.zeros({c});
    p.decoder[i] = init_blocks(factory, cfg, l);
  }
  return p;
}

template <typename T>
void SruParams<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string lp = join_name(prefix, "enc" + std::to_string(l));
    visit_blocks(encoder[l], lp, f);
    f(join_name(lp, "down_w"), down_w[l]);
    f(join_name(lp, "down_b"), down_b[l]);
  }
  visit_blocks(bottleneck, join_name(prefix, "mid"), f);
  for (std::size_t l = decoder.size(); l-- > 0;) {
    const std::string lp = join_name(prefix, "dec" + std::to_string(l));
    f(join_name(lp, "up_w"), up_w[l]);
    f(join_name(lp, "up_b"), up_b[l]);
    f(join_name(lp, "skip_w"), skip_w[l]);
    f(join_name(lp, "skip_b"), skip_b[l]);
    visit_blocks(decoder[l], lp, f);
  }
}

template <typename T>
Tensor<T> sru_forward(const Tensor<T>& x, const SruParams<T>& p, const ModelConfig& cfg) {
  if (x.rank() != 3 || x.dim(2) != cfg.c_in || x.dim(0) % cfg.patch != 0 || x.dim(1) % cfg.patch != 0) {
    throw DimensionError("sru: expected [H, W, " + std::to_string(cfg.c_in) + "] with H, W multiples of " +
                         std::to_string(cfg.patch) + ", got " + shape_str(x.shape()));
  }
  std::vector<Tensor<T>> skips;
  Tensor<T> fea = x;
  for (Index l = 0; l < cfg.depth; ++l) {
    const auto i = static_cast<std::size_t>(l);
    fea = run_blocks(fea, p.encoder[i], csrm_dims(cfg, l));
    skips.push_back(fea);
    fea = spatial_conv(fea, p.down_w[i], p.down_b[i], 1, 2);
  }
  fea = run_blocks(fea, p.bottleneck, csrm_dims(cfg, cfg.depth));
  for (Index l = cfg.depth - 1; l >= 0; --l) {
    const auto i = static_cast<std::size_t>(l);
    fea = conv_transpose2x2(fea, p.up_w[i], p.up_b[i]);
    fea = channel_map(concat(std::vector<Tensor<T>>{fea, skips[i]}, 2), p.skip_w[i], p.skip_b[i]);
    fea = run_blocks(fea, p.decoder[i], csrm_dims(cfg, l));
  }
  return add(x, fea);
}

template <typename T>
CcnetParams<T> CcnetParams<T>::init(const ModelConfig& cfg) {
  cfg.validate();
  ParamFactory<T> factory(cfg.seed);
  CcnetParams p;
  p.embed_w = factory.weight({cfg.c_in, cfg.in_channels, 3, 3}, 9 * cfg.in_channels);
  p.embed_b = factory.zeros({cfg.c_in});
  for (Index u = 0; u < cfg.units; ++u) p.units.push_back(SruParams<T>::init(factory, cfg));
  p.head_w = factory.weight({cfg.bands, cfg.c_in, 3, 3}, 9 * cfg.c_in);
  p.head_b = factory.zeros({cfg.bands});
  return p;
}

template <typename T>
void CcnetParams<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(join_name(prefix, "embed_w"), embed_w);
  f(join_name(prefix, "embed_b"), embed_b);
  for (std::size_t u = 0; u < units.size(); ++u) units[u].visit(join_name(prefix, "sru" + std::to_string(u)), f);
  f(join_name(prefix, "head_w"), head_w);
  f(join_name(prefix, "head_b"), head_b);
}

template <typename T>
NamedTensors<T> CcnetParams<T>::named() {
  return collect_params<T>(*this);
}

template <typename T>
Tensor<T> ccnet_forward(const Tensor<T>& rgb, const CcnetParams<T>& p, const ModelConfig& cfg) {
  if (rgb.rank() != 3 || rgb.dim(2) != cfg.in_channels || rgb.dim(0) < 1 || rgb.dim(1) < 1) {
    throw DimensionError("ccnet: expected [H, W, " + std::to_string(cfg.in_channels) + "], got " +
                         shape_str(rgb.shape()));
  }
  const Index h = rgb.dim(0), w = rgb.dim(1), m = cfg.spatial_multiple();
  const Index ph = (m - h % m) % m, pw = (m - w % m) % m;
  Tensor<T> x = pad(pad(rgb, 0, 0, ph, PadMode::Reflect), 1, 0, pw, PadMode::Reflect);
  Tensor<T> fea = spatial_conv(x, p.embed_w, p.embed_b, 1);
  for (const auto& unit : p.units) fea = sru_forward(fea, unit, cfg);
  Tensor<T> out = spatial_conv(fea, p.head_w, p.head_b, 1);
  if (ph == 0 && pw == 0) return out;
  return slice(slice(out, 0, 0, h), 1, 0, w);
}

namespace {

struct Terms {
  Index params = 0;
  Index macs = 0;
  Terms& operator+=(const Terms& o) {
    params += o.params;
    macs += o.macs;
    return *this;
  }
};

Terms grscm_cost(const GrscmDims& g, Index hw) {
  const Index c = g.channels, k = g.groups, n = g.heads(), d = g.head_width();
  return {3 * c * c / k + k * n * d * d + k * n + c * c, 3 * hw * c * c / k + 2 * k * n * d * d * hw + hw * c * c};
}

Terms nescm_cost(const NescmDims& d, Index hw) {
  const Index n = d.heads(), s = d.window, lead = d.share_cmu ? 1 : n;
  const Index cmu_params = lead * (2 + 1 + 9 * s + 1);
  return {2 * cmu_params + 2 * n * n + n, 2 * d.c_in * n * hw * s * (2 + 9) + 2 * n * n * hw * d.c_in};
}

Terms paf_cost(const PafDims& d, Index hw) {
  const Index c = d.channels, k = d.groups;
  return {3 * k + c * c + c + k * k + k, hw * k * 2 + hw * c * c + hw * k * k + 2 * hw * c * k};
}

Terms inter_cost(const CsrmDims& dims, Index hw) {
  Terms t = grscm_cost(dims.grscm(), hw);
  t += nescm_cost(dims.nescm(), hw);
  t += paf_cost(dims.paf(), hw);
  return t;
}

Terms mha_cost(const CsrmDims& dims, Index hw) {
  const Index c = dims.channels, n = c / dims.c_in;
  return {4 * c * c + n, 4 * hw * c * c + 2 * n * dims.c_in * dims.c_in * hw};
}

Terms conv_terms(Index out_hw, Index cin, Index cout, Index kernel) {
  return {cin * cout * kernel * kernel + cout, out_hw * cin * cout * kernel * kernel};
}

Terms block_cost(const CsrmDims& dims, Index hw) {
  Terms t = inter_cost(dims, hw);
  const Index c = dims.channels;
  t += {4 * c + 8 * c * c + 5 * c, 8 * hw * c * c};
  return t;
}

}  // namespace

Cost conv_cost(Index out_h, Index out_w, Index cin, Index cout, Index kernel, bool bias) {
  Terms t = conv_terms(out_h * out_w, cin, cout, kernel);
  if (!bias) t.params -= cout;
  return {t.params, 2 * t.macs};
}

Cost count_params_flops(const ModelConfig& cfg, CostMode mode, Index height, Index width, Index channels) {
  cfg.validate();
  if (height < 1 || width < 1) throw DimensionError("cost: spatial size must be positive");
  Terms t;
  if (mode != CostMode::Full) {
    CsrmDims dims{channels, cfg.c_in, cfg.groups, cfg.window, cfg.patch, cfg.share_cmu};
    if (channels < 1 || channels % cfg.c_in != 0) {
      throw DimensionError("cost: channels " + std::to_string(channels) + " must be a multiple of c_in " +
                           std::to_string(cfg.c_in));
    }
    if (height % cfg.patch != 0 || width % cfg.patch != 0) {
      throw DimensionError("cost: spatial size must be a multiple of the patch size " + std::to_string(cfg.patch));
    }
    t = mode == CostMode::InterModule ? inter_cost(dims, height * width) : mha_cost(dims, height * width);
    return {t.params, 2 * t.macs};
  }
  const Index m = cfg.spatial_multiple();
  const Index h = (height + m - 1) / m * m, w = (width + m - 1) / m * m;
  t += conv_terms(h * w, cfg.in_channels, cfg.c_in, 3);
  Terms unit;
  for (Index l = 0; l <= cfg.depth; ++l) {
    const Index hw = (h >> l) * (w >> l);
    const Index blocks = l < cfg.depth ? 2 * cfg.blocks_per_level : cfg.blocks_per_level;
    const Terms one = block_cost(csrm_dims(cfg, l), hw);
    unit += {blocks * one.params, blocks * one.macs};
    if (l == cfg.depth) break;
    const Index c = cfg.channels_at(l), hw_next = (h >> (l + 1)) * (w >> (l + 1));
    unit += conv_terms(hw_next, c, 2 * c, 3);  // down
    unit += conv_terms(hw_next, 2 * c, c, 2);  // up: every input pixel paints a 2x2 block
    unit += conv_terms(hw, 2 * c, c, 1);       // skip fuse
  }
  t += {cfg.units * unit.params, cfg.units * unit.macs};
  t += conv_terms(h * w, cfg.c_in, cfg.bands, 3);
  return {t.params, 2 * t.macs};
}

template struct FfnParams<float>;
template struct FfnParams<double>;
template struct CsrmParams<float>;
template struct CsrmParams<double>;
template struct SruParams<float>;
template struct SruParams<double>;
template struct CcnetParams<float>;
template struct CcnetParams<double>;
template Tensor<float> ffn_forward(const Tensor<float>&, const FfnParams<float>&);
template Tensor<double> ffn_forward(const Tensor<double>&, const FfnParams<double>&);
template Tensor<float> csrm_block_forward(const Tensor<float>&, const CsrmParams<float>&, const CsrmDims&);
template Tensor<double> csrm_block_forward(const Tensor<double>&, const CsrmParams<double>&, const CsrmDims&);
template Tensor<float> sru_forward(const Tensor<float>&, const SruParams<float>&, const ModelConfig&);
template Tensor<double> sru_forward(const Tensor<double>&, const SruParams<double>&, const ModelConfig&);
template Tensor<float> ccnet_forward(const Tensor<float>&, const CcnetParams<float>&, const ModelConfig&);
template Tensor<double> ccnet_forward(const Tensor<double>&, const CcnetParams<double>&, const ModelConfig&);

}  // namespace ccnet
