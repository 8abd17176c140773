#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccnet/gradcheck.hpp"

namespace ccnet {

/// Finite-difference checks of whole modules on the micro configuration in
/// float64: grscm, nescm, paf, ffn, block (8x8 inputs) and net (16x16 RGB).
struct ModuleCheck {
  std::string module;
  GradcheckReport input;
  GradcheckReport params;
  double max_rel_error() const { return std::max(input.max_rel_error, params.max_rel_error); }
};

const std::vector<std::string>& gradcheck_modules();

/// Module parameters are drawn uniformly from [-0.4, 0.4]; the full network is
/// checked at its seeded initialization. With `corrupt`, the input passes
/// through an identity whose backward rule scales the gradient by 1.01.
ModuleCheck check_module(const std::string& module, std::uint64_t seed, double eps = 1e-4, bool corrupt = false);

}  // namespace ccnet
