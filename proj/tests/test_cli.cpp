#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ccnet/dataio.hpp"
#include "ccnet/objectives.hpp"
#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace ccnet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("ccnet_cli_" + std::to_string(std::random_device{}()));
  Scratch() { fs::create_directories(dir); }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string slurp(const std::string& path) {
  const auto b = read_file(path);
  return {b.begin(), b.end()};
}

// "key=value" lookup in a metrics line.
double field(const std::string& line, const std::string& key) {
  const auto at = line.find(key + "=");
  REQUIRE(at != std::string::npos);
  return std::stod(line.substr(at + key.size() + 1));
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("gen-data is deterministic and records its inputs") {
  Scratch tmp;
  const std::vector<std::string> base{"gen-data", "--count", "2", "--size", "8x6", "--bands", "31", "--seed", "7"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", tmp / "a"});
  b.insert(b.end(), {"--out", tmp / "b"});
  REQUIRE(invoke(a).code == 0);
  REQUIRE(invoke(b).code == 0);
  for (const char* f : {"0000_hsi.hsic", "0000_rgb.hsic", "0001_hsi.hsic", "0001_rgb.hsic", "manifest.json", "srf.txt"}) {
    CHECK(slurp(tmp / (std::string("a/") + f)) == slurp(tmp / (std::string("b/") + f)));
  }
  const HsiCube hsi = read_cube(tmp / "a/0001_hsi.hsic");
  CHECK(hsi.height == 8);
  CHECK(hsi.width == 6);
  REQUIRE(hsi.bands == 31);
  for (Index i = 0; i < 31; ++i) CHECK(hsi.wavelengths[static_cast<std::size_t>(i)] == doctest::Approx(400.0 + 10.0 * i));
  const HsiCube rgb = read_cube(tmp / "a/0001_rgb.hsic");
  CHECK(rgb.bands == 3);
  CHECK(rgb == hsi_to_rgb(hsi, default_srf(hsi.wavelengths)));

  const auto manifest = nlohmann::json::parse(slurp(tmp / "a/manifest.json"));
  CHECK(manifest["srf"]["source"] == "default");
  CHECK(manifest["count"] == 2);
  CHECK(manifest["samples"].size() == 2u);
  CHECK(parse_srf(slurp(tmp / "a/srf.txt")) == default_srf(visible_wavelengths(31)));
}

TEST_CASE("gen-data with a custom srf and error paths") {
  Scratch tmp;
  Srf srf = default_srf(visible_wavelengths(5));
  std::reverse(srf.table.begin(), srf.table.end());
  write_text(tmp / "srf.txt", format_srf(srf));
  const Run ok = invoke({"gen-data", "--out", tmp / "d", "--size", "4x4", "--bands", "5", "--srf", tmp / "srf.txt"});
  REQUIRE(ok.code == 0);
  const auto manifest = nlohmann::json::parse(slurp(tmp / "d/manifest.json"));
  CHECK(manifest["srf"]["source"] == tmp / "srf.txt");
  CHECK(read_cube(tmp / "d/0000_rgb.hsic") == hsi_to_rgb(read_cube(tmp / "d/0000_hsi.hsic"), srf));

  const Run mismatch = invoke({"gen-data", "--out", tmp / "e", "--size", "4x4", "--bands", "6", "--srf", tmp / "srf.txt"});
  CHECK(mismatch.code == cli::kInvalid);
  CHECK(mismatch.err.rfind("error: ", 0) == 0);
  CHECK(invoke({"gen-data", "--out", tmp / "f", "--size", "4by4"}).code == cli::kUsage);
  CHECK(invoke({"gen-data", "--out", "/proc/ccnet_no_such_dir/x"}).code == cli::kIo);
  CHECK(invoke({"gen-data", "--out", tmp / "g", "--srf", tmp / "missing.txt"}).code == cli::kIo);
  CHECK(invoke({"gen-data"}).code == cli::kUsage);
}

TEST_CASE("train, reconstruct and eval agree") {
  Scratch tmp;
  REQUIRE(invoke({"gen-data", "--out", tmp / "data", "--size", "8x8", "--seed", "3"}).code == 0);
  write_text(tmp / "micro.cfg", "# fixture\npreset = micro\nsteps = 7   # overridden below\ngamma = 0.1\n");
  const Run train = invoke({"train", "--data", tmp / "data", "--out", tmp / "m.cckp", "--steps", "3", "--seed", "1",
                         "--config", tmp / "micro.cfg"});
  REQUIRE(train.code == 0);
  const std::string csv = slurp(tmp / "m.cckp.loss.csv");
  CHECK(csv.rfind("step,lr,loss_mrae,loss_dif,loss_total\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + 3);

  const Run rec = invoke({"reconstruct", "--ckpt", tmp / "m.cckp", "--input", tmp / "data/0000_rgb.hsic", "--output",
                       tmp / "p1.hsic"});
  REQUIRE(rec.code == 0);
  REQUIRE(invoke({"reconstruct", "--ckpt", tmp / "m.cckp", "--input", tmp / "data/0000_rgb.hsic", "--output",
               tmp / "p2.hsic"})
              .code == 0);
  CHECK(slurp(tmp / "p1.hsic") == slurp(tmp / "p2.hsic"));
  const HsiCube pred = read_cube(tmp / "p1.hsic");
  CHECK(pred.height == 8);
  CHECK(pred.width == 8);
  CHECK(pred.bands == 31);

  const Run ev = invoke({"eval", "--pred", tmp / "p1.hsic", "--gt", tmp / "data/0000_hsi.hsic"});
  REQUIRE(ev.code == 0);
  for (const char* key : {"mrae", "rmse", "psnr"}) {
    CHECK(field(ev.out, key) == doctest::Approx(field(train.out, key)).epsilon(1e-6));
  }

  // Same seed twice gives the same loss history and checkpoint.
  REQUIRE(invoke({"train", "--data", tmp / "data", "--out", tmp / "n.cckp", "--steps", "3", "--seed", "1", "--config",
               tmp / "micro.cfg"})
              .code == 0);
  CHECK(slurp(tmp / "n.cckp.loss.csv") == csv);
  CHECK(slurp(tmp / "n.cckp") == slurp(tmp / "m.cckp"));
}

TEST_CASE("train error paths") {
  Scratch tmp;
  const Run missing = invoke({"train", "--data", tmp / "nowhere", "--out", tmp / "m.cckp"});
  CHECK(missing.code != 0);
  CHECK(missing.err.find(tmp / "nowhere") != std::string::npos);

  REQUIRE(invoke({"gen-data", "--out", tmp / "data", "--size", "4x4"}).code == 0);
  write_text(tmp / "bad.cfg", "preset = micro\nlearning_rate = 3\n");
  const Run unknown = invoke({"train", "--data", tmp / "data", "--out", tmp / "m.cckp", "--config", tmp / "bad.cfg"});
  CHECK(unknown.code == cli::kInvalid);
  CHECK(unknown.err.find("learning_rate") != std::string::npos);

  write_text(tmp / "bad2.cfg", "preset = micro\nlr0 = fast\n");
  CHECK(invoke({"train", "--data", tmp / "data", "--out", tmp / "m.cckp", "--config", tmp / "bad2.cfg"}).code ==
        cli::kInvalid);
  write_text(tmp / "bad3.cfg", "preset = micro\nbands = 10\n");
  CHECK(invoke({"train", "--data", tmp / "data", "--out", tmp / "m.cckp", "--config", tmp / "bad3.cfg", "--steps", "1"})
            .code == cli::kInvalid);
  CHECK(invoke({"train", "--data", tmp / "data", "--out", tmp / "m.cckp", "--config", tmp / "none.cfg"}).code ==
        cli::kIo);
  CHECK(invoke({"reconstruct", "--ckpt", tmp / "none.cckp", "--input", tmp / "data/0000_rgb.hsic", "--output",
             tmp / "o.hsic"})
            .code == cli::kIo);
}

TEST_CASE("eval reports metrics and shape mismatches") {
  Scratch tmp;
  REQUIRE(invoke({"gen-data", "--out", tmp / "d", "--size", "5x4", "--count", "2", "--seed", "9"}).code == 0);
  const Run same = invoke({"eval", "--pred", tmp / "d/0000_hsi.hsic", "--gt", tmp / "d/0000_hsi.hsic"});
  REQUIRE(same.code == 0);
  CHECK(field(same.out, "mrae") == 0.0);
  CHECK(field(same.out, "psnr") == 100.0);

  const Run diff = invoke({"eval", "--pred", tmp / "d/0001_hsi.hsic", "--gt", tmp / "d/0000_hsi.hsic"});
  REQUIRE(diff.code == 0);
  const HsiCube p = read_cube(tmp / "d/0001_hsi.hsic"), g = read_cube(tmp / "d/0000_hsi.hsic");
  double rel = 0, sq = 0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const double pi = std::clamp<double>(p.data[i], 0.0, 1.0), gi = g.data[i];
    rel += std::abs(gi - pi) / std::max(gi, 1e-6);
    sq += (pi - gi) * (pi - gi);
  }
  const double n = static_cast<double>(p.data.size());
  CHECK(field(diff.out, "mrae") == doctest::Approx(rel / n).epsilon(1e-7));
  CHECK(field(diff.out, "rmse") == doctest::Approx(std::sqrt(sq / n)).epsilon(1e-7));
  CHECK(field(diff.out, "psnr") == doctest::Approx(10 * std::log10(n / sq)).epsilon(1e-6));

  const Run mismatch = invoke({"eval", "--pred", tmp / "d/0000_rgb.hsic", "--gt", tmp / "d/0000_hsi.hsic"});
  CHECK(mismatch.code == cli::kInvalid);
  CHECK(mismatch.err.find("5x4x3") != std::string::npos);
  CHECK(mismatch.err.find("5x4x31") != std::string::npos);
  CHECK(count_lines(mismatch.err) == 1);

  write_text(tmp / "junk.hsic", "JUNKJUNKJUNK");
  const Run junk = invoke({"eval", "--pred", tmp / "junk.hsic", "--gt", tmp / "d/0000_hsi.hsic"});
  CHECK(junk.code == cli::kIo);
  CHECK(junk.err.find("bad magic") != std::string::npos);
}

TEST_CASE("gradcheck command") {
  const Run a = invoke({"gradcheck", "--module", "grscm", "--seed", "0"});
  CHECK(a.code == 0);
  CHECK(a.out.rfind("grscm max_rel_error=", 0) == 0);
  CHECK(a.out.find("status=ok") != std::string::npos);
  CHECK(field(a.out, "max_rel_error") < 1e-5);
  CHECK(invoke({"gradcheck", "--module", "grscm", "--seed", "0"}).out == a.out);

  for (const char* m : {"nescm", "paf", "ffn", "block"}) {
    const Run r = invoke({"gradcheck", "--module", m});
    CHECK(r.code == 0);
    CHECK(field(r.out, "max_rel_error") < 1e-5);
  }

  const Run corrupt = invoke({"gradcheck", "--module", "ffn", "--corrupt"});
  CHECK(corrupt.code == cli::kGradcheckFailed);
  CHECK(corrupt.out.find("status=fail") != std::string::npos);
  CHECK(corrupt.err.rfind("error: ", 0) == 0);

  CHECK(invoke({"gradcheck", "--module", "lstm"}).code == cli::kUsage);
  CHECK(invoke({"gradcheck", "--eps", "-1"}).code == cli::kUsage);
}

TEST_CASE("flops command") {
  const Run inter = invoke({"flops", "--mode", "inter", "--size", "256x256x32"});
  const Run mha = invoke({"flops", "--mode", "mha", "--size", "256x256x32"});
  REQUIRE(inter.code == 0);
  REQUIRE(mha.code == 0);
  CHECK(field(inter.out, "flops") >= 0.2e9);
  CHECK(field(inter.out, "flops") <= 0.8e9);
  CHECK(field(mha.out, "flops") > field(inter.out, "flops"));

  const Run full = invoke({"flops", "--mode", "full", "--size", "64x64x31"});
  REQUIRE(full.code == 0);
  CHECK(field(full.out, "params") == 1318707.0);
  CHECK(full.out.find("reference_params=1610000") != std::string::npos);

  CHECK(invoke({"flops", "--size", "256x256"}).code == cli::kUsage);
  CHECK(invoke({"flops", "--mode", "inter", "--size", "256x256x12"}).code == cli::kInvalid);
}

TEST_CASE("help and usage") {
  const Run help = invoke({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("gen-data") != std::string::npos);
  CHECK(help.out.find("corrupt") == std::string::npos);
  CHECK(invoke({"gradcheck", "--help"}).out.find("corrupt") == std::string::npos);
  CHECK(invoke({}).code == cli::kUsage);
  CHECK(invoke({"frobnicate"}).code == cli::kUsage);
}
