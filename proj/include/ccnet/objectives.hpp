#pragma once

#include <string>

#include "ccnet/ops.hpp"

namespace ccnet {

/// Mean of |gt - pred| / max(gt, eps) over every entry. gt is treated as data.
template <typename T>
Tensor<T> mrae_loss(const Tensor<T>& pred, const Tensor<T>& gt, T eps = T(1e-6));

enum class DifNormalization {
  BandsAndPixels,  // divide by C * H * W (default)
  BandsOnly,       // divide by C, summing over pixels
};

/// Pairwise band-difference loss over [H, W, C]:
/// sum_{i != j} sum_{x, y} | |gt_i - gt_j| - |pred_i - pred_j| |, normalized.
template <typename T>
Tensor<T> spectral_difference_loss(const Tensor<T>& pred, const Tensor<T>& gt,
                                   DifNormalization norm = DifNormalization::BandsAndPixels);

struct LossWeights {
  double gamma = 0.1;
};

template <typename T>
struct LossTerms {
  Tensor<T> mrae;
  Tensor<T> dif;
  Tensor<T> total;  // mrae + gamma * dif
};

template <typename T>
LossTerms<T> total_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossWeights& w = {});

struct Metrics {
  double mrae = 0;
  double rmse = 0;
  double psnr = 0;  // peak 1, capped at 100 dB
};

/// Evaluation metrics in double precision after clamping pred to [0, 1].
template <typename T>
Metrics eval_metrics(const Tensor<T>& pred, const Tensor<T>& gt);

/// "mrae=... rmse=... psnr=..."
std::string format_metrics(const Metrics& m);

}  // namespace ccnet
