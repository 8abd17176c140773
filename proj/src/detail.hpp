#pragma once

// Internal helpers shared by the op implementations.

#include "ccnet/ops.hpp"

namespace ccnet::detail {

template <typename T>
inline bool wants_grad(const Node<T>& self, std::size_t i) {
  return self.inputs[i]->requires_grad;
}

template <typename T>
inline Buffer<T>& grad_of(Node<T>& self, std::size_t i) {
  return self.inputs[i]->grad_buffer();
}

/// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisView {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

inline AxisView axis_view(const Shape& shape, int axis) {
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= shape[static_cast<std::size_t>(i)];
  v.extent = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

inline std::vector<Index> row_major_strides(const Shape& shape) {
  std::vector<Index> strides(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    strides[static_cast<std::size_t>(i)] =
        strides[static_cast<std::size_t>(i) + 1] * shape[static_cast<std::size_t>(i) + 1];
  }
  return strides;
}

}  // namespace ccnet::detail

#define CCNET_INSTANTIATE_UNARY(fn)                 \
  template Tensor<float> fn(const Tensor<float>&);  \
  template Tensor<double> fn(const Tensor<double>&);

#define CCNET_INSTANTIATE_BINARY(fn)                                         \
  template Tensor<float> fn(const Tensor<float>&, const Tensor<float>&);    \
  template Tensor<double> fn(const Tensor<double>&, const Tensor<double>&);
