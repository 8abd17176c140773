#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <random>
#include <regex>
#include <sstream>

#include "ccnet/dataio.hpp"
#include "ccnet/gradcheck_suite.hpp"
#include "ccnet/network.hpp"
#include "ccnet/objectives.hpp"
#include "ccnet/training.hpp"

namespace ccnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GradcheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<Index> parse_size(const std::string& text, int parts) {
  static const std::regex two(R"((\d+)x(\d+))"), three(R"((\d+)x(\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(text, m, parts == 2 ? two : three)) {
    throw UsageError("bad size '" + text + "', expected " + (parts == 2 ? "HxW" : "HxWxC"));
  }
  std::vector<Index> out;
  for (int i = 1; i <= parts; ++i) {
    const Index v = std::stoll(m[i].str());
    if (v < 1) throw UsageError("bad size '" + text + "', dimensions must be >= 1");
    out.push_back(v);
  }
  return out;
}

std::string dims_str(const HsiCube& c) {
  return std::to_string(c.height) + "x" + std::to_string(c.width) + "x" + std::to_string(c.bands);
}

// ---------------------------------------------------------------------------
// key = value configuration

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

template <typename V>
V parse_value(const std::string& key, const std::string& text) {
  V v{};
  if constexpr (std::is_same_v<V, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
  } else if constexpr (std::is_floating_point_v<V>) {
    char* end = nullptr;
    v = std::strtod(text.c_str(), &end);
    if (!text.empty() && end == text.c_str() + text.size()) return v;
  } else {
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec == std::errc() && ptr == text.data() + text.size()) return v;
  }
  throw ConfigError("config key '" + key + "': bad value '" + text + "'");
}

/// Applies a config file on top of defaults. `preset` (micro | default) is
/// applied first, then every other key. Unknown keys are rejected.
void apply_config_file(const std::string& path, RunConfig& rc) {
  auto kv = read_key_values(path);
  if (auto it = kv.find("preset"); it != kv.end()) {
    if (it->second == "micro") {
      rc.model = micro_config();
    } else if (it->second == "default") {
      rc.model = ModelConfig{};
    } else {
      throw ConfigError("config key 'preset': expected micro or default, got '" + it->second + "'");
    }
    kv.erase(it);
  }
  std::optional<std::uint64_t> init_seed;
  for (const auto& [key, value] : kv) {
    auto& m = rc.model;
    auto& t = rc.train;
    const std::map<std::string, Index*> model_ints{
        {"bands", &m.bands},   {"in_channels", &m.in_channels}, {"c_in", &m.c_in},
        {"units", &m.units},   {"groups", &m.groups},           {"window", &m.window},
        {"patch", &m.patch},   {"depth", &m.depth},             {"blocks_per_level", &m.blocks_per_level},
        {"steps", &t.total_steps}, {"batch_size", &t.batch_size}, {"checkpoint_interval", &t.checkpoint_interval},
        {"crop", &t.crop}};
    const std::map<std::string, double*> doubles{
        {"lr0", &t.lr0}, {"lr_min", &t.lr_min}, {"gamma", &t.gamma}, {"grad_clip", &t.grad_clip}};
    if (auto it = model_ints.find(key); it != model_ints.end()) {
      *it->second = parse_value<Index>(key, value);
    } else if (auto dt = doubles.find(key); dt != doubles.end()) {
      *dt->second = parse_value<double>(key, value);
    } else if (key == "share_cmu") {
      m.share_cmu = parse_value<bool>(key, value);
    } else if (key == "augment") {
      t.augment = parse_value<bool>(key, value);
    } else if (key == "seed") {
      t.seed = m.seed = parse_value<std::uint64_t>(key, value);
    } else if (key == "init_seed") {
      init_seed = parse_value<std::uint64_t>(key, value);
    } else {
      throw ConfigError("unknown config key '" + key + "' in " + path);
    }
  }
  if (init_seed) rc.model.seed = *init_seed;
}

// ---------------------------------------------------------------------------
// Commands

struct GenDataArgs {
  std::string out;
  Index count = 1;
  std::string size = "64x64";
  Index bands = 31;
  std::uint64_t seed = 0;
  std::string srf;
};

void cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  const auto hw = parse_size(a.size, 2);
  if (a.count < 1) throw UsageError("--count must be >= 1");
  if (a.bands < 1) throw UsageError("--bands must be >= 1");
  const auto wavelengths = visible_wavelengths(a.bands);
  Srf srf = a.srf.empty() ? default_srf(wavelengths) : read_srf(a.srf);
  if (srf.bands() != a.bands) {
    throw DimensionError("srf has " + std::to_string(srf.bands()) + " bands, --bands is " + std::to_string(a.bands));
  }
  if (srf.wavelengths != wavelengths) throw DimensionError("srf wavelengths do not match the 400-700 nm band grid");

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec || !fs::is_directory(a.out)) throw IoError("cannot create output directory " + a.out);
  const fs::path dir(a.out);

  std::mt19937_64 seeds(a.seed);
  json samples = json::array();
  for (Index i = 0; i < a.count; ++i) {
    const std::uint64_t s = seeds();
    char stem[32];
    std::snprintf(stem, sizeof stem, "%04lld", static_cast<long long>(i));
    const HsiCube hsi = gen_synthetic_hsi(hw[0], hw[1], a.bands, s);
    const HsiCube rgb = hsi_to_rgb(hsi, srf);
    write_cube((dir / (std::string(stem) + "_hsi.hsic")).string(), hsi);
    write_cube((dir / (std::string(stem) + "_rgb.hsic")).string(), rgb);
    samples.push_back({{"index", i},
                       {"seed", s},
                       {"hsi", std::string(stem) + "_hsi.hsic"},
                       {"rgb", std::string(stem) + "_rgb.hsic"}});
  }
  const std::string srf_text = format_srf(srf);
  write_file((dir / "srf.txt").string(), std::vector<std::uint8_t>(srf_text.begin(), srf_text.end()));
  const json manifest{{"format", "ccnet-dataset"},
                      {"version", 1},
                      {"count", a.count},
                      {"height", hw[0]},
                      {"width", hw[1]},
                      {"bands", a.bands},
                      {"seed", a.seed},
                      {"srf", {{"source", a.srf.empty() ? "default" : a.srf}, {"file", "srf.txt"}}},
                      {"samples", samples}};
  const std::string text = manifest.dump(2) + "\n";
  write_file((dir / "manifest.json").string(), std::vector<std::uint8_t>(text.begin(), text.end()));
  out << "wrote " << a.count << " pairs to " << a.out << "\n";
}

std::vector<CubePair> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory not found: " + dir);
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  const auto bytes = read_file(manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(bytes.begin(), bytes.end());
    std::vector<CubePair> pairs;
    for (const auto& s : manifest.at("samples")) {
      pairs.push_back({read_cube((fs::path(dir) / s.at("rgb").get<std::string>()).string()),
                       read_cube((fs::path(dir) / s.at("hsi").get<std::string>()).string())});
    }
    if (pairs.empty()) throw FormatError(manifest_path.string() + ": no samples");
    return pairs;
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
}

Metrics pooled_metrics(const std::vector<HsiCube>& preds, const std::vector<HsiCube>& gts) {
  std::vector<double> p, g;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    p.insert(p.end(), preds[i].data.begin(), preds[i].data.end());
    g.insert(g.end(), gts[i].data.begin(), gts[i].data.end());
  }
  const Index n = static_cast<Index>(p.size());
  return eval_metrics(Tensor<double>::from({n}, p), Tensor<double>::from({n}, g));
}

struct TrainArgs {
  std::string data, out, config;
  std::optional<Index> steps;
  std::optional<std::uint64_t> seed;
};

void cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  if (!a.config.empty()) apply_config_file(a.config, rc);
  if (a.steps) rc.train.total_steps = *a.steps;
  if (a.seed) rc.train.seed = rc.model.seed = *a.seed;
  rc.model.validate();
  rc.train.validate();

  const auto data = load_dataset(a.data);
  const Index every = std::max<Index>(1, rc.train.total_steps / 10);
  auto on_step = [&](const LossRecord& r) {
    if ((r.step + 1) % every == 0 || r.step + 1 == rc.train.total_steps) {
      char line[160];
      std::snprintf(line, sizeof line, "step %lld/%lld lr=%.3g loss=%.6g mrae=%.6g\n",
                    static_cast<long long>(r.step + 1), static_cast<long long>(rc.train.total_steps), r.lr, r.total,
                    r.mrae);
      err << line;
    }
  };
  auto on_checkpoint = [&](Index step, const Checkpoint& ck) {
    save_checkpoint(a.out + ".step" + std::to_string(step), ck);
  };
  const TrainResult result = train_loop(data, rc.train, rc.model, on_checkpoint, on_step);
  save_checkpoint(a.out, result.checkpoint);
  const std::string csv = history_csv(result.history);
  write_file(a.out + ".loss.csv", std::vector<std::uint8_t>(csv.begin(), csv.end()));

  const auto params = restore_params<float>(result.checkpoint);
  std::vector<HsiCube> preds, gts;
  for (const auto& pair : data) {
    preds.push_back(reconstruct(params, rc.model, pair.rgb));
    gts.push_back(pair.hsi);
  }
  out << "steps=" << rc.train.total_steps << " " << format_metrics(pooled_metrics(preds, gts)) << "\n";
}

void cmd_reconstruct(const std::string& ckpt_path, const std::string& input, const std::string& output,
                     std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto params = restore_params<float>(ckpt);
  const HsiCube rgb = read_cube(input);
  const HsiCube hsi = reconstruct(params, ckpt.config, rgb);
  write_cube(output, hsi);
  out << "wrote " << output << " (" << dims_str(hsi) << ")\n";
}

void cmd_eval(const std::string& pred_path, const std::string& gt_path, std::ostream& out) {
  const HsiCube pred = read_cube(pred_path);
  const HsiCube gt = read_cube(gt_path);
  if (pred.height != gt.height || pred.width != gt.width || pred.bands != gt.bands) {
    throw DimensionError("shape mismatch: pred " + dims_str(pred) + " vs gt " + dims_str(gt));
  }
  out << format_metrics(eval_metrics(cube_to_tensor<double>(pred), cube_to_tensor<double>(gt))) << "\n";
}

void cmd_gradcheck(const std::string& module, double eps, std::uint64_t seed, bool corrupt, std::ostream& out) {
  std::vector<std::string> modules;
  if (module == "all") {
    modules = gradcheck_modules();
  } else {
    modules = {module};
  }
  constexpr double kThreshold = 1e-4;
  double worst = 0;
  for (const auto& m : modules) {
    const ModuleCheck r = check_module(m, seed, eps, corrupt);
    char line[256];
    std::snprintf(line, sizeof line, "%s max_rel_error=%.3e input=%.3e params=%.3e worst=%s\n", m.c_str(),
                  r.max_rel_error(), r.input.max_rel_error, r.params.max_rel_error,
                  (r.params.max_rel_error >= r.input.max_rel_error ? r.params.worst : "input" + r.input.worst).c_str());
    out << line << std::flush;
    worst = std::max(worst, r.max_rel_error());
  }
  char summary[96];
  std::snprintf(summary, sizeof summary, "all max_rel_error=%.3e status=%s\n", worst,
                worst < kThreshold ? "ok" : "fail");
  out << summary;
  if (!(worst < kThreshold)) throw GradcheckFailed("gradient check failed: max relative error " + std::to_string(worst));
}

void cmd_flops(const std::string& mode_name, const std::string& size, const std::string& config, std::ostream& out) {
  RunConfig rc;
  if (!config.empty()) apply_config_file(config, rc);
  const auto dims = parse_size(size, 3);
  const std::map<std::string, CostMode> modes{
      {"inter", CostMode::InterModule}, {"mha", CostMode::MhaInterModule}, {"full", CostMode::Full}};
  const CostMode mode = modes.at(mode_name);
  if (mode == CostMode::Full) rc.model.bands = dims[2];
  const Cost cost = count_params_flops(rc.model, mode, dims[0], dims[1], dims[2]);
  char line[200];
  std::snprintf(line, sizeof line, "mode=%s size=%s params=%lld flops=%lld gflops=%.4f\n", mode_name.c_str(),
                size.c_str(), static_cast<long long>(cost.params), static_cast<long long>(cost.flops),
                static_cast<double>(cost.flops) * 1e-9);
  out << line;
  if (mode == CostMode::Full) {
    std::snprintf(line, sizeof line, "reference_params=1610000 ratio=%.4f (informative)\n",
                  static_cast<double>(cost.params) / 1.61e6);
    out << line;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spectral reconstruction toolkit: synthetic data, training, inference, checks"};
  app.name("ccnet");
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write synthetic (hsi, rgb) cube pairs and a manifest");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Number of pairs")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "Spatial size HxW")->capture_default_str();
  gen_cmd->add_option("--bands", gen.bands, "Spectral bands")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();
  gen_cmd->add_option("--srf", gen.srf, "SRF text file (default: Gaussian R/G/B curves)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a gen-data directory");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--out", train.out, "Checkpoint path; the loss CSV goes to <out>.loss.csv")->required();
  train_cmd->add_option("--steps", train.steps, "Training steps (overrides the config file)");
  train_cmd->add_option("--seed", train.seed, "Training and initialization seed (overrides the config file)");
  train_cmd->add_option("--config", train.config, "key = value config file");

  std::string ckpt, input, output;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Reconstruct a spectral cube from an RGB cube");
  rec_cmd->add_option("--ckpt", ckpt, "Checkpoint")->required();
  rec_cmd->add_option("--input", input, "RGB cube")->required();
  rec_cmd->add_option("--output", output, "Output spectral cube")->required();

  std::string pred, gt;
  auto* eval_cmd = app.add_subcommand("eval", "Print mrae, rmse and psnr between two cubes");
  eval_cmd->add_option("--pred", pred, "Predicted cube")->required();
  eval_cmd->add_option("--gt", gt, "Ground-truth cube")->required();

  std::string module = "all";
  double eps = 1e-4;
  std::uint64_t gc_seed = 0;
  bool corrupt = false;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks on the micro configuration");
  std::vector<std::string> module_names{"all"};
  for (const auto& m : gradcheck_modules()) module_names.push_back(m);
  gc_cmd->add_option("--module", module, "Module to check")->check(CLI::IsMember(module_names))->capture_default_str();
  gc_cmd->add_option("--eps", eps, "Finite-difference step")->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--seed", gc_seed, "Input and parameter seed")->capture_default_str();
  gc_cmd->add_flag("--corrupt", corrupt, "Test fixture: corrupt one backward rule")->group("");

  std::string mode = "inter", size = "256x256x32", flops_config;
  auto* flops_cmd = app.add_subcommand("flops", "Analytic parameter and FLOP counts");
  flops_cmd->add_option("--mode", mode, "inter | mha | full")->check(CLI::IsMember({"inter", "mha", "full"}))
      ->capture_default_str();
  flops_cmd->add_option("--size", size, "HxWxC; C is the module width, or the band count in full mode")
      ->capture_default_str();
  flops_cmd->add_option("--config", flops_config, "key = value config file");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*gen_cmd) cmd_gen_data(gen, out);
    if (*train_cmd) cmd_train(train, out, err);
    if (*rec_cmd) cmd_reconstruct(ckpt, input, output, out);
    if (*eval_cmd) cmd_eval(pred, gt, out);
    if (*gc_cmd) cmd_gradcheck(module, eps, gc_seed, corrupt, out);
    if (*flops_cmd) cmd_flops(mode, size, flops_config, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const GradcheckFailed& e) {
    err << "error: " << e.what() << "\n";
    return kGradcheckFailed;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}

}  // namespace ccnet::cli
