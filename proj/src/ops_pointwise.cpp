#include <cmath>
#include <numbers>

#include "detail.hpp"

namespace ccnet {

using detail::grad_of;
using detail::wants_grad;

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Buffer<T> y = (T(1) + (-x.values()).exp()).inverse();
  return make_result<T>("sigmoid", x.shape(), std::move(y), {x}, [](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    grad_of(self, 0) += self.grad * self.value * (T(1) - self.value);
  });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  Buffer<T> y = x.values().tanh();
  return make_result<T>("tanh", x.shape(), std::move(y), {x}, [](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    grad_of(self, 0) += self.grad * (T(1) - self.value.square());
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  Buffer<T> y = x.values().unaryExpr([inv_sqrt2](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); });
  return make_result<T>("gelu", x.shape(), std::move(y), {x}, [inv_sqrt2](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    const Buffer<T>& in = self.inputs[0]->value;
    const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    Buffer<T> d = in.unaryExpr([&](T v) {
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      return cdf + v * inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
    });
    grad_of(self, 0) += self.grad * d;
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Buffer<T> y = x.values().max(T(0));
  return make_result<T>("relu", x.shape(), std::move(y), {x}, [](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    grad_of(self, 0) += (self.inputs[0]->value > T(0)).select(self.grad, T(0));
  });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  Buffer<T> y = x.values().abs();
  return make_result<T>("abs", x.shape(), std::move(y), {x}, [](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    const Buffer<T>& in = self.inputs[0]->value;
    // sign(0) = 0 gives the documented subgradient.
    grad_of(self, 0) += self.grad * in.sign();
  });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  Buffer<T> y = x.values().exp();
  return make_result<T>("exp", x.shape(), std::move(y), {x}, [](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    grad_of(self, 0) += self.grad * self.value;
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Buffer<T> y = x.values() * factor;
  return make_result<T>("scale", x.shape(), std::move(y), {x}, [factor](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    grad_of(self, 0) += self.grad * factor;
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  Buffer<T> y = x.values() + value;
  return make_result<T>("add_scalar", x.shape(), std::move(y), {x}, [](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    grad_of(self, 0) += self.grad;
  });
}

// ---------------------------------------------------------------------------
// Broadcasting binary ops

namespace {

struct Broadcast {
  Shape out;
  bool same = true;
  std::vector<Index> a_index;  // per output element, empty when `same`
  std::vector<Index> b_index;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    return plan;
  }
  plan.same = false;
  const std::size_t r = std::max(a.size(), b.size());
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
  plan.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  const auto sa = detail::row_major_strides(pa);
  const auto sb = detail::row_major_strides(pb);
  const Index n = numel(plan.out);
  plan.a_index.resize(static_cast<std::size_t>(n));
  plan.b_index.resize(static_cast<std::size_t>(n));
  std::vector<Index> idx(r, 0);
  for (Index o = 0; o < n; ++o) {
    Index ia = 0, ib = 0;
    for (std::size_t d = 0; d < r; ++d) {
      if (pa[d] != 1) ia += idx[d] * sa[d];
      if (pb[d] != 1) ib += idx[d] * sb[d];
    }
    plan.a_index[static_cast<std::size_t>(o)] = ia;
    plan.b_index[static_cast<std::size_t>(o)] = ib;
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < plan.out[static_cast<std::size_t>(d)]) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return plan;
}

template <typename T>
Buffer<T> gather(const Buffer<T>& v, const std::vector<Index>& index) {
  Buffer<T> out(static_cast<Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i) out[static_cast<Index>(i)] = v[index[i]];
  return out;
}

template <typename T>
void scatter_add(Buffer<T>& dst, const Buffer<T>& src, const std::vector<Index>& index) {
  for (std::size_t i = 0; i < index.size(); ++i) dst[index[i]] += src[static_cast<Index>(i)];
}

enum class BinaryKind { Add, Sub, Mul, Div };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* name,
                 bool clamp = false) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), name));
  Buffer<T> av = plan->same ? a.values() : gather(a.values(), plan->a_index);
  Buffer<T> bv = plan->same ? b.values() : gather(b.values(), plan->b_index);
  if (kind == BinaryKind::Div) {
    constexpr T tiny = T(1e-12);
    std::vector<Index> bad;
    for (Index i = 0; i < bv.size(); ++i) {
      if (std::abs(bv[i]) < tiny) {
        if (!clamp) {
          bad.push_back(i);
        } else {
          bv[i] = bv[i] < T(0) ? -tiny : tiny;
        }
      }
    }
    if (!bad.empty()) throw DivisionByZeroError(std::move(bad));
  }
  Buffer<T> y;
  switch (kind) {
    case BinaryKind::Add: y = av + bv; break;
    case BinaryKind::Sub: y = av - bv; break;
    case BinaryKind::Mul: y = av * bv; break;
    case BinaryKind::Div: y = av / bv; break;
  }
  const bool keep_operands = kind == BinaryKind::Mul || kind == BinaryKind::Div;
  Buffer<T> saved_a = keep_operands ? std::move(av) : Buffer<T>();
  Buffer<T> saved_b = keep_operands ? std::move(bv) : Buffer<T>();
  return make_result<T>(name, plan->out, std::move(y), {a, b},
                        [plan, kind, saved_a = std::move(saved_a), saved_b = std::move(saved_b)](Node<T>& self) {
    const Buffer<T>& g = self.grad;
    auto push = [&](std::size_t i, const Buffer<T>& contrib, const std::vector<Index>& index) {
      if (!wants_grad(self, i)) return;
      if (plan->same) {
        grad_of(self, i) += contrib;
      } else {
        scatter_add(grad_of(self, i), contrib, index);
      }
    };
    switch (kind) {
      case BinaryKind::Add:
        push(0, g, plan->a_index);
        push(1, g, plan->b_index);
        break;
      case BinaryKind::Sub:
        push(0, g, plan->a_index);
        if (wants_grad(self, 1)) push(1, Buffer<T>(-g), plan->b_index);
        break;
      case BinaryKind::Mul:
        if (wants_grad(self, 0)) push(0, Buffer<T>(g * saved_b), plan->a_index);
        if (wants_grad(self, 1)) push(1, Buffer<T>(g * saved_a), plan->b_index);
        break;
      case BinaryKind::Div:
        if (wants_grad(self, 0)) push(0, Buffer<T>(g / saved_b), plan->a_index);
        if (wants_grad(self, 1)) push(1, Buffer<T>(-g * saved_a / saved_b.square()), plan->b_index);
        break;
    }
  });
}

std::string describe_positions(const std::vector<Index>& positions) {
  std::string s = "division by |denominator| < 1e-12 at " + std::to_string(positions.size()) +
                  " position(s), first at flat index " + std::to_string(positions.front());
  return s;
}

}  // namespace

DivisionByZeroError::DivisionByZeroError(std::vector<Index> positions)
    : std::domain_error(describe_positions(positions)), positions_(std::move(positions)) {}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Add, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Sub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Mul, "mul");
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b, const DivOptions& opt) {
  return binary(a, b, BinaryKind::Div, "div", opt.clamp);
}

CCNET_INSTANTIATE_UNARY(sigmoid)
CCNET_INSTANTIATE_UNARY(tanh)
CCNET_INSTANTIATE_UNARY(gelu)
CCNET_INSTANTIATE_UNARY(relu)
CCNET_INSTANTIATE_UNARY(abs)
CCNET_INSTANTIATE_UNARY(exp)
CCNET_INSTANTIATE_BINARY(add)
CCNET_INSTANTIATE_BINARY(sub)
CCNET_INSTANTIATE_BINARY(mul)
template Tensor<float> scale(const Tensor<float>&, float);
template Tensor<double> scale(const Tensor<double>&, double);
template Tensor<float> add_scalar(const Tensor<float>&, float);
template Tensor<double> add_scalar(const Tensor<double>&, double);
template Tensor<float> div(const Tensor<float>&, const Tensor<float>&, const DivOptions&);
template Tensor<double> div(const Tensor<double>&, const Tensor<double>&, const DivOptions&);

}  // namespace ccnet
