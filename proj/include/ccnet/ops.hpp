#pragma once

#include <array>
#include <utility>
#include <vector>

#include "ccnet/tensor.hpp"

namespace ccnet {

// ---------------------------------------------------------------------------
// Linear algebra and convolution

/// Batched matrix product over the trailing two axes. Leading axes must match
/// exactly, or `b` may be a plain matrix shared by every batch entry.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

struct Conv2dOptions {
  std::array<Index, 2> padding{0, 0};
  std::array<Index, 2> stride{1, 1};
  Index groups = 1;
};

struct Conv3dOptions {
  std::array<Index, 3> padding{0, 0, 0};
  std::array<Index, 3> stride{1, 1, 1};
  Index groups = 1;
};

/// Cross-correlation. x is [Cin, H, W] or [N, Cin, H, W]; w is
/// [Cout, Cin/groups, kh, kw]; bias is [Cout] or undefined. Zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 const Conv2dOptions& opt = {});

/// 3-D analogue of conv2d: x is [Cin, D, H, W] or [N, Cin, D, H, W].
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 const Conv3dOptions& opt = {});

// ---------------------------------------------------------------------------
// Pointwise

template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
/// Exact erf form: 0.5 x (1 + erf(x / sqrt 2)).
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
/// Subgradient 0 at 0.
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);

// Binary ops broadcast with numpy rules (shapes aligned on the right).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

/// Thrown by div when a denominator is numerically zero and clamping is off.
class DivisionByZeroError : public std::domain_error {
 public:
  DivisionByZeroError(std::vector<Index> positions);
  const std::vector<Index>& positions() const { return positions_; }

 private:
  std::vector<Index> positions_;
};

struct DivOptions {
  /// When set, denominators with |d| < 1e-12 are replaced by +-1e-12.
  bool clamp = false;
};

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b, const DivOptions& opt = {});

// ---------------------------------------------------------------------------
// Reductions. The reduced axis is removed from the result shape.

template <typename T> Tensor<T> sum(const Tensor<T>& x, int axis);
template <typename T> Tensor<T> mean(const Tensor<T>& x, int axis);
/// Gradient flows to the first maximal element in scan order.
template <typename T> Tensor<T> max(const Tensor<T>& x, int axis);
template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> mean_all(const Tensor<T>& x);

/// Max-shifted softmax along the last axis.
template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& x);

// ---------------------------------------------------------------------------
// Shape bookkeeping

template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& order);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis,
                             const std::vector<Index>& sizes);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, Index start, Index length);

enum class PadMode { Zero, Reflect, Replicate };

/// Pads one axis. Reflect mirrors without repeating the edge and folds
/// repeatedly, so any pad width is valid even on a length-1 axis.
template <typename T>
Tensor<T> pad(const Tensor<T>& x, int axis, Index before, Index after, PadMode mode);

// ---------------------------------------------------------------------------
// Normalization

/// Normalizes over the last axis, then applies per-channel gain and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps = T(1e-5));

/// Divides each vector along `axis` by its L2 norm. Vectors with norm below
/// `eps` map to zero and pass no gradient.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, int axis, T eps = T(1e-8));

int normalize_axis(int axis, int rank);

}  // namespace ccnet
