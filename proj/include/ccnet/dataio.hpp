#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccnet/tensor.hpp"

namespace ccnet {

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Base of all malformed-file errors.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};
class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};
class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Spectral cube stored band-major: data[(b * height + y) * width + x].
struct HsiCube {
  Index height = 0;
  Index width = 0;
  Index bands = 0;
  std::vector<float> wavelengths;
  std::vector<float> data;

  float at(Index band, Index y, Index x) const {
    return data[static_cast<std::size_t>((band * height + y) * width + x)];
  }
  float& at(Index band, Index y, Index x) { return data[static_cast<std::size_t>((band * height + y) * width + x)]; }

  /// Throws DimensionError on inconsistent sizes, non-increasing wavelengths or
  /// non-finite values.
  void validate() const;
  bool operator==(const HsiCube&) const = default;
};

/// Evenly spaced wavelengths from 400 to 700 nm (550 for a single band).
std::vector<float> visible_wavelengths(Index bands);

// Cube file: "HSIC", u16 version 1, u32 H, W, B, B float32 wavelengths, then
// H*W*B float32 values, all little-endian.
inline constexpr std::uint16_t kCubeVersion = 1;
std::vector<std::uint8_t> encode_cube(const HsiCube& cube);
HsiCube decode_cube(const std::vector<std::uint8_t>& bytes);
void write_cube(const std::string& path, const HsiCube& cube);
HsiCube read_cube(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

/// [H, W, B] tensor view of a cube and back.
template <typename T>
Tensor<T> cube_to_tensor(const HsiCube& cube);
template <typename T>
HsiCube tensor_to_cube(const Tensor<T>& hwc, std::vector<float> wavelengths);

/// Spectral response: table[band * 3 + channel], channels R, G, B.
struct Srf {
  std::vector<float> wavelengths;
  std::vector<float> table;

  Index bands() const { return static_cast<Index>(wavelengths.size()); }
  void validate() const;
  bool operator==(const Srf&) const = default;
};

/// Gaussian responses centered at 610 / 540 / 470 nm, std 35 nm, peak 1.
Srf default_srf(const std::vector<float>& wavelengths);

/// Text form: "# srf v1" then one "wavelength r g b" line per band.
std::string format_srf(const Srf& srf);
Srf parse_srf(const std::string& text);
Srf read_srf(const std::string& path);

/// I_c = sum_b S[b, c] H_b per pixel, accumulated in double.
HsiCube hsi_to_rgb_raw(const HsiCube& cube, const Srf& srf);
/// hsi_to_rgb_raw divided by its maximum (left as is when the maximum is 0).
HsiCube hsi_to_rgb(const HsiCube& cube, const Srf& srf);

/// Smooth synthetic scene: 3-6 materials whose spectra are sums of 2-4
/// Gaussians, mixed by bilinearly interpolated random fields, clamped to
/// [0.05, 1]. Deterministic for a seed (std::mt19937_64).
HsiCube gen_synthetic_hsi(Index height, Index width, Index bands, std::uint64_t seed);

/// Dihedral transform: rotate by quarter turns counterclockwise, then flip.
struct Transform {
  int quarter_turns = 0;  // 0..3
  bool flip_h = false;    // mirror columns
  bool flip_v = false;    // mirror rows
};

Transform draw_transform(std::uint64_t seed);
HsiCube apply_transform(const HsiCube& cube, const Transform& t);

struct CubePair {
  HsiCube rgb;
  HsiCube hsi;
};

/// Applies the same seeded transform to both cubes.
CubePair augment(const CubePair& pair, std::uint64_t seed);

}  // namespace ccnet
