#include "detail.hpp"

namespace ccnet {

using detail::grad_of;
using detail::wants_grad;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const Index p = a.dim(-2), q = a.dim(-1), q2 = b.dim(-2), r = b.dim(-1);
  const Shape lead_a(a.shape().begin(), a.shape().end() - 2);
  const Shape lead_b(b.shape().begin(), b.shape().end() - 2);
  const bool share_a = lead_a.empty() && !lead_b.empty();
  const bool share_b = lead_b.empty() && !lead_a.empty();
  if (q != q2 || (!share_a && !share_b && lead_a != lead_b)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const Shape& lead = share_a ? lead_b : lead_a;
  const Index batch = numel(lead);
  Shape out_shape = lead;
  out_shape.push_back(p);
  out_shape.push_back(r);
  Buffer<T> y(batch * p * r);
  for (Index i = 0; i < batch; ++i) {
    ConstMatMap<T> am(a.values().data() + (share_a ? 0 : i * p * q), p, q);
    ConstMatMap<T> bm(b.values().data() + (share_b ? 0 : i * q * r), q, r);
    MatMap<T>(y.data() + i * p * r, p, r).noalias() = am * bm;
  }
  return make_result<T>("matmul", out_shape, std::move(y), {a, b},
                        [p, q, r, batch, share_a, share_b](Node<T>& self) {
    const Node<T>& an = *self.inputs[0];
    const Node<T>& bn = *self.inputs[1];
    for (Index i = 0; i < batch; ++i) {
      ConstMatMap<T> dc(self.grad.data() + i * p * r, p, r);
      const Index ao = share_a ? 0 : i * p * q;
      const Index bo = share_b ? 0 : i * q * r;
      if (wants_grad(self, 0)) {
        ConstMatMap<T> bm(bn.value.data() + bo, q, r);
        MatMap<T>(grad_of(self, 0).data() + ao, p, q).noalias() += dc * bm.transpose();
      }
      if (wants_grad(self, 1)) {
        ConstMatMap<T> am(an.value.data() + ao, p, q);
        MatMap<T>(grad_of(self, 1).data() + bo, q, r).noalias() += am.transpose() * dc;
      }
    }
  });
}

namespace {

/// Geometry of an S-dimensional grouped cross-correlation.
struct ConvPlan {
  Index batch = 1, cin = 0, cout = 0, groups = 1;
  Index in_sites = 1, out_sites = 1, taps = 1;
  Shape out_spatial;
  // taps x out_sites table of flat input sites; -1 marks zero padding.
  std::vector<Index> site;
};

template <std::size_t S>
ConvPlan plan_conv(const Shape& xs, const Shape& ws, const std::array<Index, S>& padding,
                   const std::array<Index, S>& stride, Index groups, bool batched, const char* name) {
  ConvPlan plan;
  const std::size_t off = batched ? 1 : 0;
  plan.batch = batched ? xs[0] : 1;
  plan.cin = xs[off];
  plan.cout = ws[0];
  plan.groups = groups;
  auto fail = [&](const std::string& why) {
    throw DimensionError(std::string(name) + ": " + why + " (input " + shape_str(xs) + ", kernel " +
                         shape_str(ws) + ")");
  };
  if (groups < 1 || plan.cin % groups != 0 || plan.cout % groups != 0) fail("channels not divisible by groups");
  if (ws[1] * groups != plan.cin) fail("kernel input channels do not match input");
  std::array<Index, S> in{}, k{}, out{};
  for (std::size_t d = 0; d < S; ++d) {
    if (padding[d] < 0 || stride[d] < 1) fail("padding must be >= 0 and stride >= 1");
    in[d] = xs[off + 1 + d];
    k[d] = ws[2 + d];
    const Index padded = in[d] + 2 * padding[d];
    if (k[d] > padded) fail("kernel larger than padded input");
    out[d] = (padded - k[d]) / stride[d] + 1;
    plan.in_sites *= in[d];
    plan.out_sites *= out[d];
    plan.taps *= k[d];
    plan.out_spatial.push_back(out[d]);
  }
  plan.site.assign(static_cast<std::size_t>(plan.taps * plan.out_sites), -1);
  std::array<Index, S> kk{};
  for (Index t = 0; t < plan.taps; ++t) {
    std::array<Index, S> oo{};
    for (Index o = 0; o < plan.out_sites; ++o) {
      Index flat = 0;
      bool inside = true;
      for (std::size_t d = 0; d < S; ++d) {
        const Index pos = oo[d] * stride[d] - padding[d] + kk[d];
        if (pos < 0 || pos >= in[d]) {
          inside = false;
          break;
        }
        flat = flat * in[d] + pos;
      }
      plan.site[static_cast<std::size_t>(t * plan.out_sites + o)] = inside ? flat : -1;
      for (int d = static_cast<int>(S) - 1; d >= 0; --d) {
        if (++oo[static_cast<std::size_t>(d)] < out[static_cast<std::size_t>(d)]) break;
        oo[static_cast<std::size_t>(d)] = 0;
      }
    }
    for (int d = static_cast<int>(S) - 1; d >= 0; --d) {
      if (++kk[static_cast<std::size_t>(d)] < k[static_cast<std::size_t>(d)]) break;
      kk[static_cast<std::size_t>(d)] = 0;
    }
  }
  return plan;
}

template <typename T>
void im2col(const ConvPlan& plan, const T* x, Index cin_g, RowMatrix<T>& col) {
  col.resize(cin_g * plan.taps, plan.out_sites);
  for (Index c = 0; c < cin_g; ++c) {
    const T* xc = x + c * plan.in_sites;
    for (Index t = 0; t < plan.taps; ++t) {
      T* row = col.data() + (c * plan.taps + t) * plan.out_sites;
      const Index* sites = plan.site.data() + t * plan.out_sites;
      for (Index o = 0; o < plan.out_sites; ++o) row[o] = sites[o] < 0 ? T(0) : xc[sites[o]];
    }
  }
}

template <typename T>
void col2im_add(const ConvPlan& plan, const RowMatrix<T>& dcol, Index cin_g, T* dx) {
  for (Index c = 0; c < cin_g; ++c) {
    T* dxc = dx + c * plan.in_sites;
    for (Index t = 0; t < plan.taps; ++t) {
      const T* row = dcol.data() + (c * plan.taps + t) * plan.out_sites;
      const Index* sites = plan.site.data() + t * plan.out_sites;
      for (Index o = 0; o < plan.out_sites; ++o) {
        if (sites[o] >= 0) dxc[sites[o]] += row[o];
      }
    }
  }
}

template <typename T, std::size_t S>
Tensor<T> conv_nd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                  const std::array<Index, S>& padding, const std::array<Index, S>& stride, Index groups,
                  const char* name) {
  const int spatial = static_cast<int>(S);
  const bool batched = x.rank() == spatial + 2;
  if ((x.rank() != spatial + 1 && !batched) || w.rank() != spatial + 2) {
    throw DimensionError(std::string(name) + ": unexpected ranks, input " + shape_str(x.shape()) + ", kernel " +
                         shape_str(w.shape()));
  }
  auto plan = std::make_shared<ConvPlan>(plan_conv<S>(x.shape(), w.shape(), padding, stride, groups, batched, name));
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != plan->cout) {
    throw DimensionError(std::string(name) + ": bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(plan->cout) + " output channels");
  }
  const Index cin_g = plan->cin / groups, cout_g = plan->cout / groups;
  const Index kcols = cin_g * plan->taps;
  Shape out_shape;
  if (batched) out_shape.push_back(plan->batch);
  out_shape.push_back(plan->cout);
  out_shape.insert(out_shape.end(), plan->out_spatial.begin(), plan->out_spatial.end());
  Buffer<T> y(numel(out_shape));
  RowMatrix<T> col;
  for (Index n = 0; n < plan->batch; ++n) {
    for (Index g = 0; g < groups; ++g) {
      im2col(*plan, x.values().data() + (n * plan->cin + g * cin_g) * plan->in_sites, cin_g, col);
      ConstMatMap<T> wm(w.values().data() + g * cout_g * kcols, cout_g, kcols);
      MatMap<T> ym(y.data() + (n * plan->cout + g * cout_g) * plan->out_sites, cout_g, plan->out_sites);
      ym.noalias() = wm * col;
      if (has_bias) {
        for (Index c = 0; c < cout_g; ++c) ym.row(c).array() += bias.values()[g * cout_g + c];
      }
    }
  }
  std::vector<Tensor<T>> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(name, out_shape, std::move(y), inputs, [plan, cin_g, cout_g, kcols, has_bias](Node<T>& self) {
    const Node<T>& xn = *self.inputs[0];
    const Node<T>& wn = *self.inputs[1];
    const bool dx = wants_grad(self, 0), dw = wants_grad(self, 1), db = has_bias && wants_grad(self, 2);
    RowMatrix<T> col, dcol;
    for (Index n = 0; n < plan->batch; ++n) {
      for (Index g = 0; g < plan->groups; ++g) {
        ConstMatMap<T> dy(self.grad.data() + (n * plan->cout + g * cout_g) * plan->out_sites, cout_g,
                          plan->out_sites);
        const Index x_off = (n * plan->cin + g * cin_g) * plan->in_sites;
        if (dw) {
          im2col(*plan, xn.value.data() + x_off, cin_g, col);
          MatMap<T>(grad_of(self, 1).data() + g * cout_g * kcols, cout_g, kcols).noalias() += dy * col.transpose();
        }
        if (dx) {
          ConstMatMap<T> wm(wn.value.data() + g * cout_g * kcols, cout_g, kcols);
          dcol.noalias() = wm.transpose() * dy;
          col2im_add(*plan, dcol, cin_g, grad_of(self, 0).data() + x_off);
        }
        if (db) {
          Buffer<T>& gb = grad_of(self, 2);
          for (Index c = 0; c < cout_g; ++c) gb[g * cout_g + c] += dy.row(c).sum();
        }
      }
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const Conv2dOptions& opt) {
  return conv_nd<T, 2>(x, w, bias, opt.padding, opt.stride, opt.groups, "conv2d");
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const Conv3dOptions& opt) {
  return conv_nd<T, 3>(x, w, bias, opt.padding, opt.stride, opt.groups, "conv3d");
}

CCNET_INSTANTIATE_BINARY(matmul)
template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, const Conv2dOptions&);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                               const Conv2dOptions&);
template Tensor<float> conv3d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, const Conv3dOptions&);
template Tensor<double> conv3d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                               const Conv3dOptions&);

}  // namespace ccnet
