#include <cmath>

#include "detail.hpp"

namespace ccnet {

using detail::axis_view;
using detail::grad_of;
using detail::wants_grad;

namespace {

Shape drop_axis(const Shape& shape, int axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (static_cast<int>(i) != axis) out.push_back(shape[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

template <typename T>
Tensor<T> sum_or_mean(const Tensor<T>& x, int axis, bool average, const char* name) {
  axis = normalize_axis(axis, x.rank());
  const auto v = axis_view(x.shape(), axis);
  const T factor = average ? T(1) / static_cast<T>(v.extent) : T(1);
  Buffer<T> y = Buffer<T>::Zero(v.outer * v.inner);
  const Buffer<T>& xv = x.values();
  for (Index o = 0; o < v.outer; ++o) {
    auto dst = y.segment(o * v.inner, v.inner);
    for (Index a = 0; a < v.extent; ++a) dst += xv.segment((o * v.extent + a) * v.inner, v.inner);
  }
  if (average) y *= factor;
  return make_result<T>(name, drop_axis(x.shape(), axis), std::move(y), {x}, [v, factor](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    Buffer<T>& g = grad_of(self, 0);
    for (Index o = 0; o < v.outer; ++o) {
      for (Index a = 0; a < v.extent; ++a) {
        g.segment((o * v.extent + a) * v.inner, v.inner) += factor * self.grad.segment(o * v.inner, v.inner);
      }
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> sum(const Tensor<T>& x, int axis) {
  return sum_or_mean(x, axis, false, "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis) {
  return sum_or_mean(x, axis, true, "mean");
}

template <typename T>
Tensor<T> max(const Tensor<T>& x, int axis) {
  axis = normalize_axis(axis, x.rank());
  const auto v = axis_view(x.shape(), axis);
  Buffer<T> y(v.outer * v.inner);
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(v.outer * v.inner));
  const Buffer<T>& xv = x.values();
  for (Index o = 0; o < v.outer; ++o) {
    for (Index i = 0; i < v.inner; ++i) {
      Index best = o * v.extent * v.inner + i;
      for (Index a = 1; a < v.extent; ++a) {
        const Index at = (o * v.extent + a) * v.inner + i;
        if (xv[at] > xv[best]) best = at;  // strict: first maximum wins
      }
      y[o * v.inner + i] = xv[best];
      (*argmax)[static_cast<std::size_t>(o * v.inner + i)] = best;
    }
  }
  return make_result<T>("max", drop_axis(x.shape(), axis), std::move(y), {x}, [argmax](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    Buffer<T>& g = grad_of(self, 0);
    for (std::size_t j = 0; j < argmax->size(); ++j) g[(*argmax)[j]] += self.grad[static_cast<Index>(j)];
  });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  Buffer<T> y(1);
  y[0] = x.values().sum();
  return make_result<T>("sum_all", Shape{1}, std::move(y), {x}, [](Node<T>& self) {
    if (wants_grad(self, 0)) grad_of(self, 0) += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  const T factor = T(1) / static_cast<T>(x.size());
  Buffer<T> y(1);
  y[0] = x.values().sum() * factor;
  return make_result<T>("mean_all", Shape{1}, std::move(y), {x}, [factor](Node<T>& self) {
    if (wants_grad(self, 0)) grad_of(self, 0) += self.grad[0] * factor;
  });
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const Index n = x.shape().back();
  const Index rows = x.size() / n;
  Buffer<T> y(x.size());
  const Buffer<T>& xv = x.values();
  for (Index r = 0; r < rows; ++r) {
    auto in = xv.segment(r * n, n);
    auto out = y.segment(r * n, n);
    out = (in - in.maxCoeff()).exp();
    out /= out.sum();
  }
  return make_result<T>("softmax", x.shape(), std::move(y), {x}, [n, rows](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    Buffer<T>& g = grad_of(self, 0);
    for (Index r = 0; r < rows; ++r) {
      auto yr = self.value.segment(r * n, n);
      auto gr = self.grad.segment(r * n, n);
      const T dot = (yr * gr).sum();
      g.segment(r * n, n) += yr * (gr - dot);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const Index c = x.shape().back();
  if (gain.size() != c || bias.size() != c) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                         " do not match channel extent " + std::to_string(c));
  }
  const Index rows = x.size() / c;
  auto xhat = std::make_shared<Buffer<T>>(x.size());
  auto inv_std = std::make_shared<Buffer<T>>(rows);
  Buffer<T> y(x.size());
  const Buffer<T>& xv = x.values();
  for (Index r = 0; r < rows; ++r) {
    auto in = xv.segment(r * c, c);
    const T mu = in.mean();
    const T var = (in - mu).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    xhat->segment(r * c, c) = (in - mu) * is;
    y.segment(r * c, c) = xhat->segment(r * c, c) * gain.values() + bias.values();
  }
  return make_result<T>("layer_norm", x.shape(), std::move(y), {x, gain, bias},
                        [xhat, inv_std, c, rows](Node<T>& self) {
    const Buffer<T>& gv = self.inputs[1]->value;
    for (Index r = 0; r < rows; ++r) {
      auto dy = self.grad.segment(r * c, c);
      auto xh = xhat->segment(r * c, c);
      if (wants_grad(self, 0)) {
        Buffer<T> dxhat = dy * gv;
        const T s1 = dxhat.sum();
        const T s2 = (dxhat * xh).sum();
        grad_of(self, 0).segment(r * c, c) +=
            ((*inv_std)[r] / static_cast<T>(c)) * (static_cast<T>(c) * dxhat - s1 - xh * s2);
      }
      if (wants_grad(self, 1)) grad_of(self, 1) += dy * xh;
      if (wants_grad(self, 2)) grad_of(self, 2) += dy;
    }
  });
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, int axis, T eps) {
  axis = normalize_axis(axis, x.rank());
  const auto v = axis_view(x.shape(), axis);
  auto inv_norm = std::make_shared<Buffer<T>>(v.outer * v.inner);  // 0 marks a guarded vector
  Buffer<T> y(x.size());
  const Buffer<T>& xv = x.values();
  for (Index o = 0; o < v.outer; ++o) {
    for (Index i = 0; i < v.inner; ++i) {
      T ss = 0;
      for (Index a = 0; a < v.extent; ++a) {
        const T e = xv[(o * v.extent + a) * v.inner + i];
        ss += e * e;
      }
      const T norm = std::sqrt(ss);
      const T inv = norm < eps ? T(0) : T(1) / norm;
      (*inv_norm)[o * v.inner + i] = inv;
      for (Index a = 0; a < v.extent; ++a) {
        const Index at = (o * v.extent + a) * v.inner + i;
        y[at] = xv[at] * inv;
      }
    }
  }
  return make_result<T>("l2_normalize", x.shape(), std::move(y), {x}, [v, inv_norm](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    Buffer<T>& g = grad_of(self, 0);
    for (Index o = 0; o < v.outer; ++o) {
      for (Index i = 0; i < v.inner; ++i) {
        const T inv = (*inv_norm)[o * v.inner + i];
        if (inv == T(0)) continue;
        T dot = 0;
        for (Index a = 0; a < v.extent; ++a) {
          const Index at = (o * v.extent + a) * v.inner + i;
          dot += self.grad[at] * self.value[at];
        }
        for (Index a = 0; a < v.extent; ++a) {
          const Index at = (o * v.extent + a) * v.inner + i;
          g[at] += (self.grad[at] - self.value[at] * dot) * inv;
        }
      }
    }
  });
}

template Tensor<float> sum(const Tensor<float>&, int);
template Tensor<double> sum(const Tensor<double>&, int);
template Tensor<float> mean(const Tensor<float>&, int);
template Tensor<double> mean(const Tensor<double>&, int);
template Tensor<float> max(const Tensor<float>&, int);
template Tensor<double> max(const Tensor<double>&, int);
CCNET_INSTANTIATE_UNARY(sum_all)
CCNET_INSTANTIATE_UNARY(mean_all)
CCNET_INSTANTIATE_UNARY(softmax_lastdim)
template Tensor<float> layer_norm(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> layer_norm(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, double);
template Tensor<float> l2_normalize(const Tensor<float>&, int, float);
template Tensor<double> l2_normalize(const Tensor<double>&, int, double);

}  // namespace ccnet
