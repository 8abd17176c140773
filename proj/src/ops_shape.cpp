#include <numeric>

#include "detail.hpp"

namespace ccnet {

using detail::axis_view;
using detail::grad_of;
using detail::wants_grad;

int normalize_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return a;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  for (Index d : shape) {
    if (d < 1) throw DimensionError("reshape: extents must be positive, got " + shape_str(shape));
  }
  return make_result<T>("reshape", shape, x.values(), {x}, [](Node<T>& self) {
    if (wants_grad(self, 0)) grad_of(self, 0) += self.grad;
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& order) {
  const int r = x.rank();
  if (static_cast<int>(order.size()) != r) {
    throw DimensionError("permute: order has " + std::to_string(order.size()) + " axes, tensor " +
                         shape_str(x.shape()));
  }
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  for (int a : order) {
    if (a < 0 || a >= r || used[static_cast<std::size_t>(a)]) {
      throw DimensionError("permute: order is not a permutation of the axes of " + shape_str(x.shape()));
    }
    used[static_cast<std::size_t>(a)] = true;
  }
  Shape out_shape(static_cast<std::size_t>(r));
  const auto in_strides = detail::row_major_strides(x.shape());
  std::vector<Index> strides(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    out_shape[static_cast<std::size_t>(i)] = x.shape()[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
  }
  const Index n = x.size();
  auto source = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(n));
  std::vector<Index> idx(static_cast<std::size_t>(r), 0);
  Index src = 0;
  for (Index o = 0; o < n; ++o) {
    (*source)[static_cast<std::size_t>(o)] = src;
    for (int d = r - 1; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      src += strides[du];
      if (++idx[du] < out_shape[du]) break;
      src -= strides[du] * idx[du];
      idx[du] = 0;
    }
  }
  Buffer<T> y(n);
  const Buffer<T>& xv = x.values();
  for (Index o = 0; o < n; ++o) y[o] = xv[(*source)[static_cast<std::size_t>(o)]];
  return make_result<T>("permute", out_shape, std::move(y), {x}, [source](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    Buffer<T>& g = grad_of(self, 0);
    for (std::size_t o = 0; o < source->size(); ++o) g[(*source)[o]] += self.grad[static_cast<Index>(o)];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const int r = parts.front().rank();
  axis = normalize_axis(axis, r);
  Shape out_shape = parts.front().shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  std::vector<Index> extents;
  for (const auto& p : parts) {
    if (p.rank() != r) throw DimensionError("concat: rank mismatch " + shape_str(p.shape()));
    for (int d = 0; d < r; ++d) {
      if (d != axis && p.shape()[static_cast<std::size_t>(d)] != parts.front().shape()[static_cast<std::size_t>(d)]) {
        throw DimensionError("concat: shapes " + shape_str(parts.front().shape()) + " and " +
                             shape_str(p.shape()) + " differ off the concat axis");
      }
    }
    extents.push_back(p.dim(axis));
    out_shape[static_cast<std::size_t>(axis)] += p.dim(axis);
  }
  const auto view = axis_view(out_shape, axis);
  Buffer<T> y(numel(out_shape));
  Index offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Index chunk = extents[k] * view.inner;
    const Buffer<T>& pv = parts[k].values();
    for (Index o = 0; o < view.outer; ++o) {
      y.segment(o * view.extent * view.inner + offset, chunk) = pv.segment(o * chunk, chunk);
    }
    offset += chunk;
  }
  return make_result<T>("concat", out_shape, std::move(y), parts, [view, extents](Node<T>& self) {
    Index offset = 0;
    for (std::size_t k = 0; k < extents.size(); ++k) {
      const Index chunk = extents[k] * view.inner;
      if (wants_grad(self, k)) {
        Buffer<T>& g = grad_of(self, k);
        for (Index o = 0; o < view.outer; ++o) {
          g.segment(o * chunk, chunk) += self.grad.segment(o * view.extent * view.inner + offset, chunk);
        }
      }
      offset += chunk;
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, Index start, Index length) {
  axis = normalize_axis(axis, x.rank());
  const Index extent = x.dim(axis);
  if (start < 0 || length < 1 || start + length > extent) {
    throw DimensionError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") outside axis of extent " + std::to_string(extent));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  const auto view = axis_view(x.shape(), axis);
  const Index chunk = length * view.inner;
  Buffer<T> y(numel(out_shape));
  const Buffer<T>& xv = x.values();
  for (Index o = 0; o < view.outer; ++o) {
    y.segment(o * chunk, chunk) = xv.segment(o * extent * view.inner + start * view.inner, chunk);
  }
  return make_result<T>("slice", out_shape, std::move(y), {x}, [view, start, chunk](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    Buffer<T>& g = grad_of(self, 0);
    for (Index o = 0; o < view.outer; ++o) {
      g.segment(o * view.extent * view.inner + start * view.inner, chunk) += self.grad.segment(o * chunk, chunk);
    }
  });
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, const std::vector<Index>& sizes) {
  axis = normalize_axis(axis, x.rank());
  const Index total = std::accumulate(sizes.begin(), sizes.end(), Index{0});
  if (total != x.dim(axis)) {
    throw DimensionError("split: sizes sum to " + std::to_string(total) + " but axis " + std::to_string(axis) +
                         " of " + shape_str(x.shape()) + " has extent " + std::to_string(x.dim(axis)));
  }
  std::vector<Tensor<T>> out;
  Index start = 0;
  for (Index s : sizes) {
    out.push_back(slice(x, axis, start, s));
    start += s;
  }
  return out;
}

namespace {

Index pad_source(Index i, Index n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  switch (mode) {
    case PadMode::Replicate:
      return i < 0 ? 0 : n - 1;
    case PadMode::Reflect: {
      if (n == 1) return 0;
      const Index period = 2 * (n - 1);
      Index m = i % period;
      if (m < 0) m += period;
      return m < n ? m : period - m;
    }
    case PadMode::Zero:
      break;
  }
  return -1;
}

}  // namespace

template <typename T>
Tensor<T> pad(const Tensor<T>& x, int axis, Index before, Index after, PadMode mode) {
  axis = normalize_axis(axis, x.rank());
  if (before < 0 || after < 0) throw DimensionError("pad: widths must be non-negative");
  const Index n = x.dim(axis);
  const Index m = n + before + after;
  auto source = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) (*source)[static_cast<std::size_t>(i)] = pad_source(i - before, n, mode);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = m;
  const auto view = axis_view(x.shape(), axis);
  Buffer<T> y = Buffer<T>::Zero(numel(out_shape));
  const Buffer<T>& xv = x.values();
  for (Index o = 0; o < view.outer; ++o) {
    for (Index i = 0; i < m; ++i) {
      const Index s = (*source)[static_cast<std::size_t>(i)];
      if (s < 0) continue;
      y.segment((o * m + i) * view.inner, view.inner) = xv.segment((o * n + s) * view.inner, view.inner);
    }
  }
  return make_result<T>("pad", out_shape, std::move(y), {x}, [view, source, n, m](Node<T>& self) {
    if (!wants_grad(self, 0)) return;
    Buffer<T>& g = grad_of(self, 0);
    for (Index o = 0; o < view.outer; ++o) {
      for (Index i = 0; i < m; ++i) {
        const Index s = (*source)[static_cast<std::size_t>(i)];
        if (s < 0) continue;
        g.segment((o * n + s) * view.inner, view.inner) += self.grad.segment((o * m + i) * view.inner, view.inner);
      }
    }
  });
}

template Tensor<float> reshape(const Tensor<float>&, const Shape&);
template Tensor<double> reshape(const Tensor<double>&, const Shape&);
template Tensor<float> permute(const Tensor<float>&, const std::vector<int>&);
template Tensor<double> permute(const Tensor<double>&, const std::vector<int>&);
template Tensor<float> concat(const std::vector<Tensor<float>>&, int);
template Tensor<double> concat(const std::vector<Tensor<double>>&, int);
template Tensor<float> slice(const Tensor<float>&, int, Index, Index);
template Tensor<double> slice(const Tensor<double>&, int, Index, Index);
template std::vector<Tensor<float>> split(const Tensor<float>&, int, const std::vector<Index>&);
template std::vector<Tensor<double>> split(const Tensor<double>&, int, const std::vector<Index>&);
template Tensor<float> pad(const Tensor<float>&, int, Index, Index, PadMode);
template Tensor<double> pad(const Tensor<double>&, int, Index, Index, PadMode);

}  // namespace ccnet
