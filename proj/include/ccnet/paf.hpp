#pragma once

#include "ccnet/ops.hpp"
#include "ccnet/params.hpp"

namespace ccnet {

/// Patch-wise adaptive fusion of attention features with progressive features.
struct PafDims {
  Index channels = 0;  // C
  Index groups = 0;    // k
  Index patch = 1;     // r

  void validate() const;
};

template <typename T>
struct PafParams {
  Tensor<T> sia_w;  // [k, 2]: weights of the (mean, max) maps per group
  Tensor<T> sia_b;  // [k]
  Tensor<T> att_w;  // [C, C]
  Tensor<T> att_b;  // [C]
  Tensor<T> cp_w;   // [k, k]
  Tensor<T> cp_b;   // [k]

  static PafParams init(ParamFactory<T>& factory, const PafDims& dims);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

/// Spectrum information aggregation: per channel group, a 1x1 convolution of
/// the channel-mean and channel-max maps. [H, W, C] -> [H, W, k].
template <typename T>
Tensor<T> sia_compress(const Tensor<T>& progressive, const PafParams<T>& p, Index groups);

/// [H, W, C] -> [P, C, r*r] with P = HW / r^2 row-major tiles.
template <typename T>
Tensor<T> patchify(const Tensor<T>& x, Index patch);

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, Index height, Index width);

/// Softmax-normalized cosine similarities [P, C, k] between every mapped
/// attention channel and every mapped compressed channel inside each patch.
template <typename T>
Tensor<T> paf_weights(const Tensor<T>& attention, const Tensor<T>& progressive, const PafParams<T>& p,
                      const PafDims& dims);

/// attention + unpatchify(weights x compressed patches). The residual carries
/// the unmapped attention features.
template <typename T>
Tensor<T> paf_fuse(const Tensor<T>& attention, const Tensor<T>& progressive, const PafParams<T>& p,
                   const PafDims& dims);

}  // namespace ccnet
