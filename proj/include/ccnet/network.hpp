#pragma once

#include <vector>

#include "ccnet/config.hpp"
#include "ccnet/grscm.hpp"
#include "ccnet/nescm.hpp"
#include "ccnet/paf.hpp"

namespace ccnet {

/// Shape parameters of one CSRM block at a given U-Net level.
struct CsrmDims {
  Index channels = 0;
  Index c_in = 0;
  Index groups = 0;
  Index window = 3;
  Index patch = 1;
  bool share_cmu = true;

  GrscmDims grscm() const { return {channels, c_in, groups}; }
  NescmDims nescm() const { return {channels, c_in, window, share_cmu}; }
  PafDims paf() const { return {channels, groups, patch}; }
};

CsrmDims csrm_dims(const ModelConfig& cfg, Index level);

/// Pointwise feed-forward: 1x1 expand by 4, GELU, 1x1 contract.
template <typename T>
struct FfnParams {
  Tensor<T> w1, b1;  // [C, 4C], [4C]
  Tensor<T> w2, b2;  // [4C, C], [C]

  static FfnParams init(ParamFactory<T>& factory, Index channels);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& x, const FfnParams<T>& p);

template <typename T>
struct CsrmParams {
  Tensor<T> norm1_g, norm1_b, norm2_g, norm2_b;
  GrscmParams<T> grscm;
  NescmParams<T> nescm;
  PafParams<T> paf;
  FfnParams<T> ffn;

  static CsrmParams init(ParamFactory<T>& factory, const CsrmDims& dims);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

/// u = LN(x); x1 = x + PAF(GrSCM(u), NeSCM(u)); out = x1 + FFN(LN(x1)).
template <typename T>
Tensor<T> csrm_block_forward(const Tensor<T>& x, const CsrmParams<T>& p, const CsrmDims& dims);

/// One U-Net shaped spectrum reconstruction unit.
template <typename T>
struct SruParams {
  std::vector<std::vector<CsrmParams<T>>> encoder;  // [level][block], levels 0..D-1
  std::vector<CsrmParams<T>> bottleneck;            // level D
  std::vector<std::vector<CsrmParams<T>>> decoder;  // [level][block], levels 0..D-1
  std::vector<Tensor<T>> down_w, down_b;            // 3x3 stride 2, C -> 2C
  std::vector<Tensor<T>> up_w, up_b;                // 2x2 transposed, 2C -> C
  std::vector<Tensor<T>> skip_w, skip_b;            // 1x1, 2C -> C

  static SruParams init(ParamFactory<T>& factory, const ModelConfig& cfg);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
};

/// [H, W, C_in] -> [H, W, C_in]; H and W must be multiples of the patch size.
template <typename T>
Tensor<T> sru_forward(const Tensor<T>& x, const SruParams<T>& p, const ModelConfig& cfg);

template <typename T>
struct CcnetParams {
  Tensor<T> embed_w, embed_b;  // [C_in, in_channels, 3, 3]
  std::vector<SruParams<T>> units;
  Tensor<T> head_w, head_b;    // [bands, C_in, 3, 3]

  /// Deterministic initialization from cfg.seed.
  static CcnetParams init(const ModelConfig& cfg);
  void visit(const std::string& prefix, const ParamVisitor<T>& f);
  NamedTensors<T> named();
};

/// RGB [H, W, in_channels] -> spectra [H, W, bands]. Inputs are reflect-padded
/// up to a multiple of the patch size and the output is cropped back.
template <typename T>
Tensor<T> ccnet_forward(const Tensor<T>& rgb, const CcnetParams<T>& p, const ModelConfig& cfg);

enum class CostMode { Full, InterModule, MhaInterModule };

/// Analytic cost model. One multiply-accumulate counts as two FLOPs; every
/// convolution, matrix product and attention product is included, while
/// normalizations, activations and softmax are not.
struct Cost {
  Index params = 0;
  Index flops = 0;
};

/// One convolution producing an out_h x out_w map.
Cost conv_cost(Index out_h, Index out_w, Index cin, Index cout, Index kernel, bool bias = true);

/// Full: the whole network on an H x W RGB image (channels ignored).
/// InterModule / MhaInterModule: one inter-spectral module (GrSCM + NeSCM + PAF,
/// or plain multi-head spectral attention) on an H x W x channels feature map.
Cost count_params_flops(const ModelConfig& cfg, CostMode mode, Index height, Index width, Index channels);

}  // namespace ccnet
