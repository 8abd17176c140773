#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ccnet/tensor.hpp"

namespace ccnet {

/// Outcome of a central-difference comparison. Relative error per coordinate is
/// |a - n| / max(1e-8, |a| + |n|).
struct GradcheckReport {
  double max_rel_error = 0.0;
  double analytic = 0.0;  // values at the worst coordinate
  double numeric = 0.0;
  std::string worst;      // "<tensor>[<flat index>]"
  Index checked = 0;
};

double relative_error(double analytic, double numeric);

/// Checks d f / d x at every coordinate of x. f must be deterministic and
/// return a single-element tensor.
GradcheckReport grad_check_report(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                  const Tensor<double>& x, double eps = 1e-4);

inline double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                         const Tensor<double>& x, double eps = 1e-4) {
  return grad_check_report(f, x, eps).max_rel_error;
}

using NamedParams = std::vector<std::pair<std::string, Tensor<double>>>;

/// Checks the gradient of `loss` with respect to parameter leaves, perturbing
/// them in place. At most `coords_per_tensor` coordinates of each tensor are
/// visited (all of them when the tensor is that small), picked by `seed`.
GradcheckReport grad_check_params(const std::function<Tensor<double>()>& loss, const NamedParams& params,
                                  Index coords_per_tensor, std::uint64_t seed, double eps = 1e-4);

}  // namespace ccnet
