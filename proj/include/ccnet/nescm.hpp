#pragma once

#include <utility>
#include <vector>

#include "ccnet/ops.hpp"
#include "ccnet/params.hpp"

namespace ccnet {

/// Neighborhood-wise spectral continuity modeling: a bidirectional recurrent
/// sweep of continuous memory units over sliding spectral windows.
struct NescmDims {
  Index channels = 0;  // C
  Index c_in = 0;      // bands per head
  Index window = 3;    // s, odd
  bool share_cmu = true;

  Index heads() const { return channels / c_in; }
  void validate() const;
};

/// Continuous memory unit. The forget gate is a 1x1x1 convolution over the
/// stacked (memory, input) pair; the output gate is a 3x3xs convolution that
/// collapses the window axis. With shared weights the leading axis is 1 and
/// heads are folded into the batch; otherwise each head owns a slice.
template <typename T>
struct CmuParams {
  Tensor<T> gate_w;  // [1 or n, 2, 1, 1, 1]
  Tensor<T> gate_b;  // [1 or n]
  Tensor<T> out_w;   // [1 or n, 1, 3, 3, s]
  Tensor<T> out_b;   // [1 or n]

  static CmuParams init(ParamFactory<T>& factory, Index heads, Index window, bool share);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

template <typename T>
struct NescmParams {
  CmuParams<T> forward_cmu;
  CmuParams<T> backward_cmu;
  Tensor<T> fuse_w;  // [n, 2n, 1, 1, 1]
  Tensor<T> fuse_b;  // [n]

  static NescmParams init(ParamFactory<T>& factory, const NescmDims& dims);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

/// Splits [n, H, W, C_in] into C_in windows [n, H, W, s]; window t is centered
/// on band t with the edge bands replicated past either end.
template <typename T>
std::vector<Tensor<T>> extract_segments(const Tensor<T>& x, Index window);

template <typename T>
struct CmuOutput {
  Tensor<T> memory;  // [n, H, W, s]
  Tensor<T> output;  // [n, H, W, 1], the progressive feature
};

template <typename T>
CmuOutput<T> cmu_step(const Tensor<T>& memory, const Tensor<T>& segment, const CmuParams<T>& p);

template <typename T>
struct NescmBranches {
  Tensor<T> forward;   // [n, H, W, C_in] in band order
  Tensor<T> backward;  // [n, H, W, C_in] re-reversed into band order
};

/// Runs both branches over the [H, W, C] input without fusing them.
template <typename T>
NescmBranches<T> nescm_branches(const Tensor<T>& x, const NescmParams<T>& p, const NescmDims& dims);

/// [H, W, C] -> [H, W, C] global progressive features.
template <typename T>
Tensor<T> nescm_forward(const Tensor<T>& x, const NescmParams<T>& p, const NescmDims& dims);

/// Channel c = head * C_in + band. [H, W, C] <-> [n, H, W, C_in].
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, Index c_in);
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x);

}  // namespace ccnet
