#include "ccnet/dataio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>

#include "ccnet/params.hpp"

namespace ccnet {

void HsiCube::validate() const {
  if (height < 1 || width < 1 || bands < 1) {
    throw DimensionError("cube: dimensions must be positive, got " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(bands));
  }
  if (static_cast<Index>(wavelengths.size()) != bands) {
    throw DimensionError("cube: " + std::to_string(wavelengths.size()) + " wavelengths for " + std::to_string(bands) +
                         " bands");
  }
  if (static_cast<Index>(data.size()) != height * width * bands) {
    throw DimensionError("cube: data holds " + std::to_string(data.size()) + " values, expected " +
                         std::to_string(height * width * bands));
  }
  for (std::size_t i = 1; i < wavelengths.size(); ++i) {
    if (!(wavelengths[i] > wavelengths[i - 1])) throw DimensionError("cube: wavelengths must be strictly increasing");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw DimensionError("cube: non-finite value");
  }
}

std::vector<float> visible_wavelengths(Index bands) {
  if (bands == 1) return {550.0f};
  std::vector<float> out;
  for (Index b = 0; b < bands; ++b) {
    out.push_back(static_cast<float>(400.0 + 300.0 * static_cast<double>(b) / static_cast<double>(bands - 1)));
  }
  return out;
}

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'H', 'S', 'I', 'C'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 3 * 4;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace

std::vector<std::uint8_t> encode_cube(const HsiCube& cube) {
  cube.validate();
  const auto limit = std::numeric_limits<std::uint32_t>::max();
  if (cube.height > limit || cube.width > limit || cube.bands > limit) {
    throw DimensionError("cube: dimensions exceed the 32-bit header fields");
  }
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(kHeaderBytes + 4 * (cube.wavelengths.size() + cube.data.size()));
  put_u16(out, kCubeVersion);
  put_u32(out, static_cast<std::uint32_t>(cube.height));
  put_u32(out, static_cast<std::uint32_t>(cube.width));
  put_u32(out, static_cast<std::uint32_t>(cube.bands));
  for (float w : cube.wavelengths) put_f32(out, w);
  for (float v : cube.data) put_f32(out, v);
  return out;
}

HsiCube decode_cube(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kMagic.size()) throw TruncatedError("cube: file too short for magic");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) throw BadMagicError("cube: bad magic");
  if (bytes.size() < kHeaderBytes) throw TruncatedError("cube: header truncated");
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | bytes[5] << 8);
  if (version != kCubeVersion) {
    throw VersionMismatchError("cube: version " + std::to_string(version) + ", expected " +
                               std::to_string(kCubeVersion));
  }
  HsiCube cube;
  cube.height = get_u32(&bytes[6]);
  cube.width = get_u32(&bytes[10]);
  cube.bands = get_u32(&bytes[14]);
  if (cube.height == 0 || cube.width == 0 || cube.bands == 0) throw FormatError("cube: zero dimension in header");
  // 32-bit fields: the product of three can exceed 64 bits, so compare in long double first.
  const long double values = static_cast<long double>(cube.height) * cube.width * cube.bands;
  const long double needed = kHeaderBytes + 4.0L * (cube.bands + values);
  if (needed > static_cast<long double>(bytes.size())) {
    throw TruncatedError("cube: expected " + std::to_string(static_cast<unsigned long long>(needed)) +
                         " bytes, file has " + std::to_string(bytes.size()));
  }
  if (needed < static_cast<long double>(bytes.size())) throw FormatError("cube: trailing bytes after data");
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  cube.wavelengths.resize(static_cast<std::size_t>(cube.bands));
  for (auto& w : cube.wavelengths) {
    w = get_f32(p);
    p += 4;
  }
  cube.data.resize(static_cast<std::size_t>(cube.height * cube.width * cube.bands));
  for (auto& v : cube.data) {
    v = get_f32(p);
    p += 4;
  }
  try {
    cube.validate();
  } catch (const DimensionError& e) {
    throw FormatError(e.what());
  }
  return cube;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

void write_cube(const std::string& path, const HsiCube& cube) { write_file(path, encode_cube(cube)); }

HsiCube read_cube(const std::string& path) { return decode_cube(read_file(path)); }

template <typename T>
Tensor<T> cube_to_tensor(const HsiCube& cube) {
  cube.validate();
  const Index hw = cube.height * cube.width;
  Buffer<T> values(hw * cube.bands);
  for (Index b = 0; b < cube.bands; ++b)
    for (Index i = 0; i < hw; ++i) values[i * cube.bands + b] = static_cast<T>(cube.data[static_cast<std::size_t>(b * hw + i)]);
  return Tensor<T>({cube.height, cube.width, cube.bands}, std::move(values));
}

template <typename T>
HsiCube tensor_to_cube(const Tensor<T>& hwc, std::vector<float> wavelengths) {
  if (hwc.rank() != 3) throw DimensionError("tensor_to_cube: expected [H, W, B], got " + shape_str(hwc.shape()));
  HsiCube cube;
  cube.height = hwc.dim(0);
  cube.width = hwc.dim(1);
  cube.bands = hwc.dim(2);
  cube.wavelengths = std::move(wavelengths);
  const Index hw = cube.height * cube.width;
  cube.data.resize(static_cast<std::size_t>(hw * cube.bands));
  for (Index b = 0; b < cube.bands; ++b)
    for (Index i = 0; i < hw; ++i) cube.data[static_cast<std::size_t>(b * hw + i)] = static_cast<float>(hwc.values()[i * cube.bands + b]);
  cube.validate();
  return cube;
}

void Srf::validate() const {
  if (wavelengths.empty()) throw DimensionError("srf: no bands");
  if (table.size() != 3 * wavelengths.size()) throw DimensionError("srf: table size does not match band count");
  for (std::size_t i = 1; i < wavelengths.size(); ++i) {
    if (!(wavelengths[i] > wavelengths[i - 1])) throw DimensionError("srf: wavelengths must be strictly increasing");
  }
  std::array<bool, 3> positive{};
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!std::isfinite(table[i]) || table[i] < 0) throw DimensionError("srf: entries must be finite and >= 0");
    positive[i % 3] = positive[i % 3] || table[i] > 0;
  }
  if (!positive[0] || !positive[1] || !positive[2]) throw DimensionError("srf: every channel needs a positive entry");
}

Srf default_srf(const std::vector<float>& wavelengths) {
  constexpr std::array<double, 3> centers{610.0, 540.0, 470.0};
  constexpr double sigma = 35.0;
  Srf srf;
  srf.wavelengths = wavelengths;
  for (float w : wavelengths) {
    for (double c : centers) {
      const double d = (static_cast<double>(w) - c) / sigma;
      srf.table.push_back(static_cast<float>(std::exp(-0.5 * d * d)));
    }
  }
  return srf;
}

std::string format_srf(const Srf& srf) {
  srf.validate();
  std::ostringstream out;
  out.precision(9);
  out << "# srf v1\n";
  for (Index b = 0; b < srf.bands(); ++b) {
    out << srf.wavelengths[static_cast<std::size_t>(b)];
    for (Index c = 0; c < 3; ++c) out << ' ' << srf.table[static_cast<std::size_t>(b * 3 + c)];
    out << '\n';
  }
  return out.str();
}

Srf parse_srf(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool header = false;
  Srf srf;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!header) {
      if (line.rfind("# srf v1", 0) != 0) throw FormatError("srf: missing '# srf v1' header");
      header = true;
      continue;
    }
    std::istringstream fields(line);
    double w, r, g, b;
    std::string extra;
    if (!(fields >> w >> r >> g >> b) || (fields >> extra)) {
      throw FormatError("srf: line " + std::to_string(line_no) + " is not 'wavelength r g b'");
    }
    srf.wavelengths.push_back(static_cast<float>(w));
    srf.table.insert(srf.table.end(), {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)});
  }
  if (!header) throw FormatError("srf: missing '# srf v1' header");
  try {
    srf.validate();
  } catch (const DimensionError& e) {
    throw FormatError(e.what());
  }
  return srf;
}

Srf read_srf(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_srf(std::string(bytes.begin(), bytes.end()));
}

HsiCube hsi_to_rgb_raw(const HsiCube& cube, const Srf& srf) {
  cube.validate();
  srf.validate();
  if (srf.bands() != cube.bands) {
    throw DimensionError("hsi_to_rgb: srf has " + std::to_string(srf.bands()) + " bands, cube has " +
                         std::to_string(cube.bands));
  }
  HsiCube rgb;
  rgb.height = cube.height;
  rgb.width = cube.width;
  rgb.bands = 3;
  rgb.wavelengths = {0.0f, 1.0f, 2.0f};
  const Index hw = cube.height * cube.width;
  rgb.data.resize(static_cast<std::size_t>(3 * hw));
  for (Index c = 0; c < 3; ++c)
    for (Index i = 0; i < hw; ++i) {
      double s = 0;
      for (Index b = 0; b < cube.bands; ++b) {
        s += static_cast<double>(srf.table[static_cast<std::size_t>(b * 3 + c)]) *
             static_cast<double>(cube.data[static_cast<std::size_t>(b * hw + i)]);
      }
      rgb.data[static_cast<std::size_t>(c * hw + i)] = static_cast<float>(s);
    }
  return rgb;
}

HsiCube hsi_to_rgb(const HsiCube& cube, const Srf& srf) {
  HsiCube rgb = hsi_to_rgb_raw(cube, srf);
  const float peak = *std::max_element(rgb.data.begin(), rgb.data.end());
  if (peak > 0) {
    for (auto& v : rgb.data) v /= peak;
  }
  return rgb;
}

namespace {

// Smooth random field on [0, 1]: a 4x4 grid of uniform values, bilinearly interpolated.
std::vector<double> smooth_field(std::mt19937_64& rng, Index height, Index width) {
  constexpr Index grid = 4;
  std::array<double, grid * grid> knots{};
  for (auto& k : knots) k = unit_uniform(rng);
  std::vector<double> field(static_cast<std::size_t>(height * width));
  for (Index y = 0; y < height; ++y) {
    const double fy = height == 1 ? 0.0 : static_cast<double>(y) * (grid - 1) / static_cast<double>(height - 1);
    const Index y0 = std::min<Index>(static_cast<Index>(fy), grid - 2);
    const double ty = fy - static_cast<double>(y0);
    for (Index x = 0; x < width; ++x) {
      const double fx = width == 1 ? 0.0 : static_cast<double>(x) * (grid - 1) / static_cast<double>(width - 1);
      const Index x0 = std::min<Index>(static_cast<Index>(fx), grid - 2);
      const double tx = fx - static_cast<double>(x0);
      auto k = [&](Index r, Index c) { return knots[static_cast<std::size_t>(r * grid + c)]; };
      field[static_cast<std::size_t>(y * width + x)] =
          (1 - ty) * ((1 - tx) * k(y0, x0) + tx * k(y0, x0 + 1)) + ty * ((1 - tx) * k(y0 + 1, x0) + tx * k(y0 + 1, x0 + 1));
    }
  }
  return field;
}

}  // namespace

HsiCube gen_synthetic_hsi(Index height, Index width, Index bands, std::uint64_t seed) {
  if (height < 1 || width < 1 || bands < 1) throw DimensionError("gen_synthetic_hsi: dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  HsiCube cube;
  cube.height = height;
  cube.width = width;
  cube.bands = bands;
  cube.wavelengths = visible_wavelengths(bands);

  const int materials = 3 + static_cast<int>(rng() % 4);
  std::vector<std::vector<double>> spectra;
  for (int m = 0; m < materials; ++m) {
    const int bumps = 2 + static_cast<int>(rng() % 3);
    std::vector<double> s(static_cast<std::size_t>(bands), 0.0);
    for (int g = 0; g < bumps; ++g) {
      const double center = 380.0 + 340.0 * unit_uniform(rng);
      const double width_nm = 20.0 + 60.0 * unit_uniform(rng);
      const double amp = 0.2 + 0.8 * unit_uniform(rng);
      for (Index b = 0; b < bands; ++b) {
        const double d = (cube.wavelengths[static_cast<std::size_t>(b)] - center) / width_nm;
        s[static_cast<std::size_t>(b)] += amp * std::exp(-0.5 * d * d);
      }
    }
    const double peak = *std::max_element(s.begin(), s.end());
    const double level = 0.3 + 0.7 * unit_uniform(rng);
    for (auto& v : s) v = peak > 0 ? v / peak * level : 0.0;
    spectra.push_back(std::move(s));
  }
  std::vector<std::vector<double>> weights;
  for (int m = 0; m < materials; ++m) {
    auto f = smooth_field(rng, height, width);
    for (auto& v : f) v = v * v * v * v;  // sharpen so materials form regions
    weights.push_back(std::move(f));
  }
  const Index hw = height * width;
  cube.data.resize(static_cast<std::size_t>(hw * bands));
  for (Index i = 0; i < hw; ++i) {
    double total = 0;
    for (int m = 0; m < materials; ++m) total += weights[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
    for (Index b = 0; b < bands; ++b) {
      double v = 0;
      for (int m = 0; m < materials; ++m) {
        const double w = total > 0 ? weights[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] / total
                                   : 1.0 / materials;
        v += w * spectra[static_cast<std::size_t>(m)][static_cast<std::size_t>(b)];
      }
      cube.data[static_cast<std::size_t>(b * hw + i)] = static_cast<float>(std::clamp(0.05 + v, 0.05, 1.0));
    }
  }
  return cube;
}

Transform draw_transform(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Transform t;
  t.quarter_turns = static_cast<int>(rng() % 4);
  t.flip_h = rng() % 2 == 1;
  t.flip_v = rng() % 2 == 1;
  return t;
}

HsiCube apply_transform(const HsiCube& cube, const Transform& t) {
  cube.validate();
  HsiCube out = cube;
  for (int turn = 0; turn < ((t.quarter_turns % 4) + 4) % 4; ++turn) {
    HsiCube rotated = out;
    rotated.height = out.width;
    rotated.width = out.height;
    // Counterclockwise: out(y, x) = in(x, W - 1 - y).
    for (Index b = 0; b < out.bands; ++b)
      for (Index y = 0; y < rotated.height; ++y)
        for (Index x = 0; x < rotated.width; ++x) rotated.at(b, y, x) = out.at(b, x, out.width - 1 - y);
    out = std::move(rotated);
  }
  if (t.flip_h || t.flip_v) {
    HsiCube flipped = out;
    for (Index b = 0; b < out.bands; ++b)
      for (Index y = 0; y < out.height; ++y)
        for (Index x = 0; x < out.width; ++x) {
          flipped.at(b, y, x) = out.at(b, t.flip_v ? out.height - 1 - y : y, t.flip_h ? out.width - 1 - x : x);
        }
    out = std::move(flipped);
  }
  return out;
}

CubePair augment(const CubePair& pair, std::uint64_t seed) {
  if (pair.rgb.height != pair.hsi.height || pair.rgb.width != pair.hsi.width) {
    throw DimensionError("augment: rgb " + std::to_string(pair.rgb.height) + "x" + std::to_string(pair.rgb.width) +
                         " and hsi " + std::to_string(pair.hsi.height) + "x" + std::to_string(pair.hsi.width) +
                         " differ spatially");
  }
  const Transform t = draw_transform(seed);
  return {apply_transform(pair.rgb, t), apply_transform(pair.hsi, t)};
}

template Tensor<float> cube_to_tensor(const HsiCube&);
template Tensor<double> cube_to_tensor(const HsiCube&);
template HsiCube tensor_to_cube(const Tensor<float>&, std::vector<float>);
template HsiCube tensor_to_cube(const Tensor<double>&, std::vector<float>);

}  // namespace ccnet
