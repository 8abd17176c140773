#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <set>
#include <tuple>

#include "ccnet/dataio.hpp"
#include "ccnet/objectives.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace ccnet;
namespace fs = std::filesystem;

namespace {

HsiCube random_cube(Index h, Index w, Index b, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  HsiCube c{h, w, b, visible_wavelengths(b), {}};
  c.data.resize(static_cast<std::size_t>(h * w * b));
  for (auto& v : c.data) v = dist(rng);
  return c;
}

Srf random_srf(Index bands, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Srf s{visible_wavelengths(bands), {}};
  for (Index i = 0; i < 3 * bands; ++i) s.table.push_back(dist(rng));
  return s;
}

fs::path scratch_dir() {
  auto dir = fs::temp_directory_path() / ("ccnet_dataio_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  return dir;
}

// Pearson correlation of two bands over all pixels; NaN when either is constant.
double band_correlation(const HsiCube& c, Index a, Index b) {
  const Index n = c.height * c.width;
  double ma = 0, mb = 0;
  for (Index i = 0; i < n; ++i) {
    ma += c.data[static_cast<std::size_t>(a * n + i)];
    mb += c.data[static_cast<std::size_t>(b * n + i)];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (Index i = 0; i < n; ++i) {
    const double da = c.data[static_cast<std::size_t>(a * n + i)] - ma;
    const double db = c.data[static_cast<std::size_t>(b * n + i)] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

// Mean correlation over all band pairs at the given distance, skipping constant bands.
double mean_correlation(const HsiCube& c, Index distance) {
  double s = 0;
  int n = 0;
  for (Index b = 0; b + distance < c.bands; ++b) {
    const double r = band_correlation(c, b, b + distance);
    if (std::isfinite(r)) {
      s += r;
      ++n;
    }
  }
  return n ? s / n : NAN;
}

}  // namespace

TEST_CASE("cube files round trip bit for bit") {
  const auto dir = scratch_dir();
  const HsiCube cube = random_cube(4, 4, 3, 1);
  const auto path = (dir / "a.hsic").string();
  write_cube(path, cube);
  const HsiCube back = read_cube(path);
  CHECK(back == cube);
  CHECK(std::memcmp(back.data.data(), cube.data.data(), cube.data.size() * sizeof(float)) == 0);

  // Non-trivial float payloads survive: negative zero, subnormals, extremes.
  HsiCube odd{1, 2, 2, {400.0f, 700.0f}, {-0.0f, 1e-40f, 3.4e38f, 0.123456789f}};
  write_cube(path, odd);
  const HsiCube odd_back = read_cube(path);
  CHECK(std::memcmp(odd_back.data.data(), odd.data.data(), odd.data.size() * sizeof(float)) == 0);

  HsiCube tiny{1, 1, 1, {550.0f}, {0.5f}};
  write_cube(path, tiny);
  CHECK(fs::file_size(path) == 4 + 2 + 12 + 4 + 4);
  fs::remove_all(dir);
}

TEST_CASE("cube encoding is little-endian") {
  HsiCube tiny{1, 1, 1, {1.0f}, {2.0f}};
  const auto bytes = encode_cube(tiny);
  REQUIRE(bytes.size() == 26u);
  const std::vector<std::uint8_t> head{'H', 'S', 'I', 'C', 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0};
  CHECK(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 18) == head);
  // 1.0f = 0x3f800000, 2.0f = 0x40000000
  CHECK(std::vector<std::uint8_t>(bytes.begin() + 18, bytes.end()) ==
        std::vector<std::uint8_t>{0, 0, 0x80, 0x3f, 0, 0, 0, 0x40});
}

TEST_CASE("malformed cube files raise distinct errors") {
  const auto good = encode_cube(random_cube(2, 3, 4, 2));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_cube(bad_magic), BadMagicError);

  auto bad_version = good;
  bad_version[4] = 2;
  CHECK_THROWS_AS(decode_cube(bad_version), VersionMismatchError);

  for (std::size_t keep : {0ul, 3ul, 10ul, 17ul, good.size() - 1}) {
    CHECK_THROWS_AS(decode_cube(std::vector<std::uint8_t>(good.begin(), good.begin() + static_cast<long>(keep))),
                    TruncatedError);
  }

  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_cube(trailing), FormatError);

  // Huge header dimensions are rejected before any allocation.
  auto huge = good;
  for (std::size_t i = 6; i < 18; ++i) huge[i] = 0xff;
  CHECK_THROWS_AS(decode_cube(huge), TruncatedError);

  auto zero_dim = good;
  zero_dim[6] = zero_dim[7] = zero_dim[8] = zero_dim[9] = 0;
  CHECK_THROWS_AS(decode_cube(zero_dim), FormatError);

  // Wavelengths out of order.
  auto unordered = good;
  std::swap_ranges(unordered.begin() + 18, unordered.begin() + 22, unordered.begin() + 22);
  CHECK_THROWS_AS(decode_cube(unordered), FormatError);

  CHECK_THROWS_AS(read_cube("/nonexistent/dir/cube.hsic"), IoError);

  // Every truncation of a valid file fails cleanly.
  for (std::size_t keep = 0; keep < good.size(); ++keep) {
    CHECK_THROWS_AS(decode_cube(std::vector<std::uint8_t>(good.begin(), good.begin() + static_cast<long>(keep))),
                    FormatError);
  }
}

TEST_CASE("cube validation") {
  HsiCube c = random_cube(2, 2, 3, 3);
  CHECK_NOTHROW(c.validate());
  HsiCube short_data = c;
  short_data.data.pop_back();
  CHECK_THROWS_AS(short_data.validate(), DimensionError);
  HsiCube nan = c;
  nan.data[0] = NAN;
  CHECK_THROWS_AS(encode_cube(nan), DimensionError);
  HsiCube flat = c;
  flat.wavelengths[1] = flat.wavelengths[0];
  CHECK_THROWS_AS(flat.validate(), DimensionError);
}

TEST_CASE("cube and tensor layouts agree") {
  const HsiCube c = random_cube(3, 4, 5, 4);
  const auto t = cube_to_tensor<double>(c);
  CHECK(t.shape() == Shape{3, 4, 5});
  for (Index b = 0; b < 5; ++b)
    for (Index y = 0; y < 3; ++y)
      for (Index x = 0; x < 4; ++x) CHECK(t.values()[(y * 4 + x) * 5 + b] == static_cast<double>(c.at(b, y, x)));
  CHECK(tensor_to_cube(t, c.wavelengths) == c);
  CHECK(tensor_to_cube(cube_to_tensor<float>(c), c.wavelengths) == c);
  CHECK_THROWS_AS(tensor_to_cube(t, visible_wavelengths(4)), DimensionError);
}

TEST_CASE("srf text round trip and parse errors") {
  const Srf s = default_srf(visible_wavelengths(31));
  CHECK(parse_srf(format_srf(s)) == s);
  CHECK(format_srf(s).rfind("# srf v1\n", 0) == 0);
  CHECK(parse_srf("# srf v1\n400 1 0 0\n\n500 0 1 0\n600 0 0 1\n").bands() == 3);
  CHECK_THROWS_AS(parse_srf("400 1 0 0\n"), FormatError);
  CHECK_THROWS_AS(parse_srf("# srf v1\n400 1 0\n"), FormatError);
  CHECK_THROWS_AS(parse_srf("# srf v1\n400 1 0 0 5\n"), FormatError);
  CHECK_THROWS_AS(parse_srf("# srf v1\n400 -1 1 1\n"), FormatError);
  CHECK_THROWS_AS(parse_srf("# srf v1\n400 1 0 0\n500 1 0 0\n"), FormatError);  // blue column all zero
  CHECK_THROWS_AS(parse_srf("# srf v1\n500 1 1 1\n400 1 1 1\n"), FormatError);
  CHECK_THROWS_AS(read_srf("/nonexistent/srf.txt"), IoError);
}

TEST_CASE("default srf curves") {
  const auto wl = visible_wavelengths(31);
  CHECK(wl.front() == 400.0f);
  CHECK(wl.back() == 700.0f);
  CHECK(wl[15] == doctest::Approx(550.0));
  const Srf s = default_srf(wl);
  CHECK_NOTHROW(s.validate());
  // Peaks: 610 -> index 21, 540 -> 14, 470 -> 7.
  CHECK(s.table[21 * 3 + 0] == 1.0f);
  CHECK(s.table[14 * 3 + 1] == 1.0f);
  CHECK(s.table[7 * 3 + 2] == 1.0f);
  for (Index d = 1; d <= 7; ++d) {
    CHECK(s.table[static_cast<std::size_t>((21 - d) * 3 + 0)] == s.table[static_cast<std::size_t>((21 + d) * 3 + 0)]);
    CHECK(s.table[static_cast<std::size_t>((14 - d) * 3 + 1)] == s.table[static_cast<std::size_t>((14 + d) * 3 + 1)]);
    CHECK(s.table[static_cast<std::size_t>((7 - d) * 3 + 2)] == s.table[static_cast<std::size_t>((7 + d) * 3 + 2)]);
  }
  CHECK(default_srf(wl) == s);

  // Trapezoid mass of each column, 10 nm steps.
  std::vector<double> mass(3, 0.0);
  for (Index c = 0; c < 3; ++c)
    for (Index b = 0; b + 1 < 31; ++b) {
      mass[static_cast<std::size_t>(c)] += 5.0 * (s.table[static_cast<std::size_t>(b * 3 + c)] +
                                                  s.table[static_cast<std::size_t>((b + 1) * 3 + c)]);
    }
  const double lo = *std::min_element(mass.begin(), mass.end());
  const double hi = *std::max_element(mass.begin(), mass.end());
  CHECK((hi - lo) / hi < 0.05);
}

TEST_CASE("hsi_to_rgb matches the triple loop") {
  const Index h = 4, w = 5, b = 31;
  const HsiCube cube = random_cube(h, w, b, 5);
  const Srf srf = random_srf(b, 6);
  std::vector<double> expect(static_cast<std::size_t>(3 * h * w));
  double peak = 0;
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        double s = 0;
        for (Index i = 0; i < b; ++i) s += double(srf.table[static_cast<std::size_t>(i * 3 + c)]) * cube.at(i, y, x);
        expect[static_cast<std::size_t>((c * h + y) * w + x)] = s;
        peak = std::max(peak, s);
      }
  const HsiCube raw = hsi_to_rgb_raw(cube, srf);
  const HsiCube rgb = hsi_to_rgb(cube, srf);
  CHECK(raw.bands == 3);
  CHECK(rgb.height == h);
  CHECK(rgb.width == w);
  float top = 0;
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(std::abs(raw.data[i] - expect[i]) <= 1e-6 * std::max(1.0, expect[i]));
    CHECK(std::abs(rgb.data[i] - expect[i] / peak) <= 1e-6);
    top = std::max(top, rgb.data[i]);
  }
  CHECK(top == 1.0f);
}

TEST_CASE("hsi_to_rgb delta, zero and linearity") {
  const Index b = 6;
  const HsiCube cube = random_cube(3, 3, b, 7);
  Srf delta{visible_wavelengths(b), std::vector<float>(static_cast<std::size_t>(3 * b), 0.0f)};
  delta.table[4 * 3 + 0] = 1.0f;
  delta.table[1 * 3 + 1] = 1.0f;
  delta.table[2 * 3 + 2] = 1.0f;
  const HsiCube raw = hsi_to_rgb_raw(cube, delta);
  for (Index y = 0; y < 3; ++y)
    for (Index x = 0; x < 3; ++x) {
      CHECK(raw.at(0, y, x) == cube.at(4, y, x));
      CHECK(raw.at(1, y, x) == cube.at(1, y, x));
      CHECK(raw.at(2, y, x) == cube.at(2, y, x));
    }

  HsiCube zero = cube;
  std::fill(zero.data.begin(), zero.data.end(), 0.0f);
  const HsiCube zrgb = hsi_to_rgb(zero, random_srf(b, 8));
  CHECK(std::all_of(zrgb.data.begin(), zrgb.data.end(), [](float v) { return v == 0.0f; }));

  const Srf srf = random_srf(b, 9);
  const HsiCube h1 = random_cube(3, 3, b, 10), h2 = random_cube(3, 3, b, 11);
  const float alpha = 0.7f, beta = -1.3f;
  HsiCube mix = h1;
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = alpha * h1.data[i] + beta * h2.data[i];
  const HsiCube lhs = hsi_to_rgb_raw(mix, srf);
  const HsiCube r1 = hsi_to_rgb_raw(h1, srf), r2 = hsi_to_rgb_raw(h2, srf);
  for (std::size_t i = 0; i < lhs.data.size(); ++i) {
    CHECK(std::abs(lhs.data[i] - (alpha * r1.data[i] + beta * r2.data[i])) < 1e-5);
  }

  CHECK_THROWS_AS(hsi_to_rgb(cube, random_srf(b + 1, 12)), DimensionError);
}

TEST_CASE("synthetic scenes") {
  const HsiCube a = gen_synthetic_hsi(16, 16, 31, 42);
  const HsiCube b = gen_synthetic_hsi(16, 16, 31, 42);
  CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
  CHECK(a.wavelengths == visible_wavelengths(31));
  CHECK(gen_synthetic_hsi(16, 16, 31, 43).data != a.data);
  CHECK_NOTHROW(a.validate());

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const HsiCube c = gen_synthetic_hsi(1 + static_cast<Index>(seed % 7), 1 + static_cast<Index>(seed % 5), 31, seed);
    for (float v : c.data) {
      CHECK(v >= 0.05f);
      CHECK(v <= 1.0f);
    }
  }
  CHECK_THROWS_AS(gen_synthetic_hsi(0, 4, 31, 1), DimensionError);
}

TEST_CASE("synthetic scenes favour nearby bands") {
  const int seeds = 100;
  int pass = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    const HsiCube c = gen_synthetic_hsi(32, 32, 31, static_cast<std::uint64_t>(seed));
    if (mean_correlation(c, 1) > mean_correlation(c, 10)) ++pass;
  }
  MESSAGE("locality holds on " << pass << " / " << seeds << " seeds");
  CHECK(pass >= 95);
}

TEST_CASE("transforms form the dihedral group") {
  const HsiCube c = random_cube(3, 5, 2, 13);
  CHECK(apply_transform(c, Transform{}) == c);

  // Counterclockwise quarter turn on a 2x3 grid.
  HsiCube g{2, 3, 1, {500.0f}, {1, 2, 3, 4, 5, 6}};
  const HsiCube r = apply_transform(g, {1, false, false});
  CHECK(r.height == 3);
  CHECK(r.width == 2);
  CHECK(r.data == std::vector<float>{3, 6, 2, 5, 1, 4});
  CHECK(apply_transform(g, {0, true, false}).data == std::vector<float>{3, 2, 1, 6, 5, 4});
  CHECK(apply_transform(g, {0, false, true}).data == std::vector<float>{4, 5, 6, 1, 2, 3});

  const HsiCube q1 = apply_transform(c, {1, false, false});
  CHECK(apply_transform(q1, {1, false, false}) == apply_transform(c, {2, false, false}));
  HsiCube spun = c;
  for (int i = 0; i < 4; ++i) spun = apply_transform(spun, {1, false, false});
  CHECK(spun == c);
  for (bool fh : {false, true})
    for (bool fv : {false, true}) {
      const Transform t{0, fh, fv};
      CHECK(apply_transform(apply_transform(c, t), t) == c);
    }
  // Both flips equal a half turn.
  CHECK(apply_transform(c, {0, true, true}) == apply_transform(c, {2, false, false}));
}

TEST_CASE("augment applies one draw to both cubes") {
  const HsiCube hsi = random_cube(4, 6, 5, 14);
  const HsiCube rgb = hsi_to_rgb(hsi, default_srf(hsi.wavelengths));
  std::set<std::tuple<int, bool, bool>> seen;
  for (std::uint64_t seed = 0; seed < 256; ++seed) {
    const Transform t = draw_transform(seed);
    CHECK(t.quarter_turns >= 0);
    CHECK(t.quarter_turns < 4);
    seen.insert({t.quarter_turns, t.flip_h, t.flip_v});
    const CubePair out = augment({rgb, hsi}, seed);
    CHECK(out.rgb == apply_transform(rgb, t));
    CHECK(out.hsi == apply_transform(hsi, t));
    const CubePair again = augment({rgb, hsi}, seed);
    CHECK(again.hsi == out.hsi);
    if (t.quarter_turns == 0 && !t.flip_h && !t.flip_v) CHECK(out.hsi == hsi);
  }
  CHECK(seen.size() == 16u);
  CHECK_THROWS_AS(augment({random_cube(4, 5, 3, 1), hsi}, 0), DimensionError);
}

TEST_CASE("metrics are unchanged by a shared transform") {
  const HsiCube gt = gen_synthetic_hsi(8, 6, 31, 15);
  HsiCube pred = gt;
  std::mt19937_64 rng(16);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  for (auto& v : pred.data) v += noise(rng);
  const Metrics base = eval_metrics(cube_to_tensor<double>(pred), cube_to_tensor<double>(gt));
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    const CubePair out = augment({pred, gt}, seed);
    const Metrics m = eval_metrics(cube_to_tensor<double>(out.rgb), cube_to_tensor<double>(out.hsi));
    CHECK(std::abs(m.mrae - base.mrae) < 1e-12);
    CHECK(std::abs(m.rmse - base.rmse) < 1e-12);
    CHECK(std::abs(m.psnr - base.psnr) < 1e-9);
  }
}
