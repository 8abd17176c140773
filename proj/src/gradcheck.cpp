#include "ccnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ccnet {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

void note(GradcheckReport& report, double a, double n, const std::string& where) {
  const double err = relative_error(a, n);
  if (report.checked++ == 0 || err > report.max_rel_error) {
    report.max_rel_error = err;
    report.analytic = a;
    report.numeric = n;
    report.worst = where;
  }
}

}  // namespace

GradcheckReport grad_check_report(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                  const Tensor<double>& x, double eps) {
  Tensor<double> leaf(x.shape(), x.values(), true);
  backward(f(leaf));
  const Buffer<double> analytic = leaf.has_grad() ? leaf.grad() : Buffer<double>::Zero(x.size());

  GradcheckReport report;
  NoGradGuard no_grad;
  Buffer<double> probe = x.values();
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double up = f(Tensor<double>(x.shape(), probe)).item();
    probe[i] = saved - eps;
    const double down = f(Tensor<double>(x.shape(), probe)).item();
    probe[i] = saved;
    note(report, analytic[i], (up - down) / (2.0 * eps), "x[" + std::to_string(i) + "]");
  }
  return report;
}

GradcheckReport grad_check_params(const std::function<Tensor<double>()>& loss, const NamedParams& params,
                                  Index coords_per_tensor, std::uint64_t seed, double eps) {
  for (const auto& [name, p] : params) p.node()->grad.resize(0);
  backward(loss());

  GradcheckReport report;
  std::mt19937_64 rng(seed);
  NoGradGuard no_grad;
  for (const auto& [name, p] : params) {
    Tensor<double> param = p;
    std::vector<Index> coords(static_cast<std::size_t>(param.size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (param.size() > coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(coords_per_tensor));
    }
    Buffer<double>& values = param.mutable_values();
    for (Index i : coords) {
      const double a = param.has_grad() ? param.grad()[i] : 0.0;
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = loss().item();
      values[i] = saved - eps;
      const double down = loss().item();
      values[i] = saved;
      note(report, a, (up - down) / (2.0 * eps), name + "[" + std::to_string(i) + "]");
    }
  }
  for (const auto& [name, p] : params) p.node()->grad.resize(0);
  return report;
}

}  // namespace ccnet
