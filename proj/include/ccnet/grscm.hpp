#pragma once

#include <vector>

#include "ccnet/config.hpp"
#include "ccnet/ops.hpp"
#include "ccnet/params.hpp"

namespace ccnet {

/// Group-wise spectral correlation modeling.
///
/// The C channels are cut into k contiguous groups. Within a group each of the
/// n = C / C_in heads holds d = C_in / k band tokens whose features are their
/// HW-length columns. Band-to-band attention is restricted to a head inside a
/// group, so a layer evaluates k * n * d^2 attention weights instead of the
/// n * C_in^2 of full spectral attention.
struct GrscmDims {
  Index channels = 0;  // C
  Index c_in = 0;      // C_in
  Index groups = 0;    // k

  Index heads() const { return channels / c_in; }
  Index group_width() const { return channels / groups; }
  Index head_width() const { return c_in / groups; }
  void validate() const;
};

template <typename T>
struct GrscmParams {
  std::vector<Tensor<T>> wq, wk, wv;  // per group, [C/k, C/k]
  std::vector<Tensor<T>> rse;         // per group, [n, d, d], relative spectrum encoding
  std::vector<Tensor<T>> sigma;       // per group, [n], similarity temperature
  Tensor<T> wo;                       // [C, C] output projection

  static GrscmParams init(ParamFactory<T>& factory, const GrscmDims& dims);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

/// Contiguous channel blocks of an [HW, C] matrix.
template <typename T>
std::vector<Tensor<T>> group_split(const Tensor<T>& x, Index groups);

/// [H, W, C] -> [H, W, C].
template <typename T>
Tensor<T> grscm_forward(const Tensor<T>& x, const GrscmParams<T>& p, const GrscmDims& dims);

/// Row-stochastic attention matrices, one [n, d, d] tensor per group. Row j
/// holds the weights band j places on every band of its head.
template <typename T>
std::vector<Tensor<T>> grscm_attention(const Tensor<T>& x, const GrscmParams<T>& p, const GrscmDims& dims);

enum class AttentionMode { Mha, Grscm };

/// Attention-matrix entries per layer application: n * C_in^2 for full
/// spectral attention, k * n * (C_in / k)^2 for the grouped variant.
Index attention_weight_count(const GrscmDims& dims, AttentionMode mode);
Index attention_weight_count(const ModelConfig& cfg, AttentionMode mode);

}  // namespace ccnet
