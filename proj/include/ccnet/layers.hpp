#pragma once

#include "ccnet/ops.hpp"

namespace ccnet {

// Feature maps between modules are [H, W, C] (channels fastest).

/// 1x1 convolution: y[h, w, :] = x[h, w, :] * weight + bias, with weight laid
/// out [Cin, Cout].
template <typename T>
Tensor<T> channel_map(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// k x k convolution on an [H, W, Cin] map; weight is [Cout, Cin, k, k].
template <typename T>
Tensor<T> spatial_conv(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                       Index padding, Index stride = 1);

/// 2x2 stride-2 transposed convolution; weight is [Cin, Cout, 2, 2]. Each input
/// pixel paints one non-overlapping 2x2 output block.
template <typename T>
Tensor<T> conv_transpose2x2(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

}  // namespace ccnet
