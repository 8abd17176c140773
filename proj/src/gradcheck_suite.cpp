#include "ccnet/gradcheck_suite.hpp"

#include <algorithm>
#include <random>

#include "ccnet/grscm.hpp"
#include "ccnet/nescm.hpp"
#include "ccnet/network.hpp"
#include "ccnet/paf.hpp"
#include "detail.hpp"

namespace ccnet {

namespace {

using TD = Tensor<double>;

TD uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  Buffer<double> v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = lo + (hi - lo) * unit_uniform(rng);
  return TD(shape, std::move(v));
}

template <typename Params>
void perturb(Params& p, std::mt19937_64& rng) {
  p.visit("", [&](const std::string&, TD& t) {
    for (Index i = 0; i < t.size(); ++i) t.mutable_values()[i] = -0.4 + 0.8 * unit_uniform(rng);
  });
}

// Identity forward, deliberately wrong backward.
TD corrupted_identity(const TD& x) {
  return make_result<double>("corrupt", x.shape(), x.values(), {x}, [](Node<double>& self) {
    if (!detail::wants_grad(self, 0)) return;
    detail::grad_of(self, 0) += 1.01 * self.grad;
  });
}

template <typename Params, typename Forward>
ModuleCheck run(const std::string& name, Params& p, const TD& x, Forward forward, std::mt19937_64& rng,
                Index coords, double eps, bool corrupt) {
  const TD coeff = uniform(forward(x).shape(), rng, -1.0, 1.0);
  auto objective = [&](const TD& in) { return sum_all(mul(forward(corrupt ? corrupted_identity(in) : in), coeff)); };
  ModuleCheck out;
  out.module = name;
  out.input = grad_check_report(objective, x, eps);
  out.params = grad_check_params([&] { return objective(x); }, collect_params<double>(p), coords, rng(), eps);
  return out;
}

}  // namespace

const std::vector<std::string>& gradcheck_modules() {
  static const std::vector<std::string> names{"grscm", "nescm", "paf", "ffn", "block", "net"};
  return names;
}

ModuleCheck check_module(const std::string& module, std::uint64_t seed, double eps, bool corrupt) {
  ModelConfig cfg = micro_config();
  cfg.seed = seed;
  const CsrmDims dims = csrm_dims(cfg, 0);
  const Index c = dims.channels;
  std::mt19937_64 rng(seed);
  ParamFactory<double> factory(seed);
  const TD x = uniform({8, 8, c}, rng, -1.0, 1.0);

  if (module == "grscm") {
    auto p = GrscmParams<double>::init(factory, dims.grscm());
    perturb(p, rng);
    return run(module, p, x, [&](const TD& in) { return grscm_forward(in, p, dims.grscm()); }, rng, 16, eps, corrupt);
  }
  if (module == "nescm") {
    auto p = NescmParams<double>::init(factory, dims.nescm());
    perturb(p, rng);
    return run(module, p, x, [&](const TD& in) { return nescm_forward(in, p, dims.nescm()); }, rng, 16, eps, corrupt);
  }
  if (module == "paf") {
    auto p = PafParams<double>::init(factory, dims.paf());
    perturb(p, rng);
    const TD prog = uniform(x.shape(), rng, -1.0, 1.0);
    return run(module, p, x, [&](const TD& in) { return paf_fuse(in, prog, p, dims.paf()); }, rng, 16, eps, corrupt);
  }
  if (module == "ffn") {
    auto p = FfnParams<double>::init(factory, c);
    perturb(p, rng);
    return run(module, p, x, [&](const TD& in) { return ffn_forward(in, p); }, rng, 16, eps, corrupt);
  }
  if (module == "block") {
    auto p = CsrmParams<double>::init(factory, dims);
    perturb(p, rng);
    return run(module, p, x, [&](const TD& in) { return csrm_block_forward(in, p, dims); }, rng, 6, eps, corrupt);
  }
  if (module == "net") {
    auto p = CcnetParams<double>::init(cfg);
    const TD rgb = uniform({16, 16, cfg.in_channels}, rng, 0.0, 1.0);
    return run(module, p, rgb, [&](const TD& in) { return ccnet_forward(in, p, cfg); }, rng, 3, eps, corrupt);
  }
  throw std::invalid_argument("unknown gradcheck module '" + module + "'");
}

}  // namespace ccnet
