#include "ccnet/config.hpp"

#include <string>

namespace ccnet {

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("invalid model config: " + why); };
  if (bands < 2) fail("bands must be >= 2");
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (c_in < 1) fail("c_in must be >= 1");
  if (units < 1) fail("units must be >= 1");
  if (groups < 1 || c_in % groups != 0) fail("c_in must be divisible by groups");
  if (window < 1 || window % 2 == 0) fail("window must be odd and >= 1");
  if (window > c_in) fail("window must not exceed c_in");
  if (depth < 0 || depth > 8) fail("depth must be in [0, 8]");
  if (patch < 1 || patch % (Index{1} << depth) != 0) fail("patch must be a positive multiple of 2^depth");
  if (blocks_per_level < 1) fail("blocks_per_level must be >= 1");
}

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.c_in = 8;
  cfg.units = 1;
  cfg.groups = 2;
  cfg.window = 3;
  cfg.patch = 4;
  cfg.depth = 1;
  cfg.blocks_per_level = 1;
  return cfg;
}

}  // namespace ccnet
