#pragma once

#include <cstdint>
#include <stdexcept>

#include "ccnet/tensor.hpp"

namespace ccnet {

/// Raised when a configuration violates an architectural constraint.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Architecture hyperparameters. Defaults reproduce the published setting:
/// 31 bands, C_in = 32, three reconstruction units, four groups, patch 16.
struct ModelConfig {
  Index bands = 31;
  Index in_channels = 3;
  Index c_in = 32;            // channels entering each reconstruction unit
  Index units = 3;            // serial reconstruction units
  Index groups = 4;           // spectral attention groups (k)
  Index window = 3;           // spectral window of the memory units (s), odd
  Index patch = 16;           // fusion patch side at the top level (r0)
  Index depth = 2;            // U-Net downsamplings
  Index blocks_per_level = 1;
  bool share_cmu = true;      // memory-unit convolutions shared across heads
  std::uint64_t seed = 0;     // parameter initialization

  void validate() const;

  Index channels_at(Index level) const { return c_in << level; }
  Index heads_at(Index level) const { return Index{1} << level; }
  Index patch_at(Index level) const { return patch >> level; }
  /// Spatial sizes must be multiples of this (padding handles the rest).
  Index spatial_multiple() const { return patch; }

  bool operator==(const ModelConfig&) const = default;
};

/// Small configuration used by gradient checks and the overfit test:
/// C_in = 8, one unit, one downsampling, k = 2, s = 3, r0 = 4.
ModelConfig micro_config();

}  // namespace ccnet
