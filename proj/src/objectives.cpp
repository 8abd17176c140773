#include "ccnet/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ccnet {

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& pred, const Tensor<T>& gt, const char* what) {
  if (pred.shape() != gt.shape()) {
    throw DimensionError(std::string(what) + ": pred " + shape_str(pred.shape()) + " and gt " + shape_str(gt.shape()) +
                         " differ");
  }
}

}  // namespace

template <typename T>
Tensor<T> mrae_loss(const Tensor<T>& pred, const Tensor<T>& gt, T eps) {
  require_same_shape(pred, gt, "mrae_loss");
  Tensor<T> denom(gt.shape(), gt.values().max(eps));
  return mean_all(div(abs(sub(pred, gt.detach())), denom));
}

template <typename T>
Tensor<T> spectral_difference_loss(const Tensor<T>& pred, const Tensor<T>& gt, DifNormalization norm) {
  require_same_shape(pred, gt, "spectral_difference_loss");
  if (pred.rank() != 3 || pred.dim(2) < 2) {
    throw DimensionError("spectral_difference_loss: expected [H, W, C] with C >= 2, got " + shape_str(pred.shape()));
  }
  const Index h = pred.dim(0), w = pred.dim(1), c = pred.dim(2);
  // [H, W, C, 1] - [H, W, 1, C] holds every ordered band pair per pixel.
  auto pairwise = [&](const Tensor<T>& x) {
    return abs(sub(reshape(x, {h, w, c, 1}), reshape(x, {h, w, 1, c})));
  };
  Tensor<T> gap = abs(sub(pairwise(gt.detach()), pairwise(pred)));
  const double count = norm == DifNormalization::BandsAndPixels ? static_cast<double>(c * h * w) : static_cast<double>(c);
  return scale(sum_all(gap), static_cast<T>(1.0 / count));
}

template <typename T>
LossTerms<T> total_loss(const Tensor<T>& pred, const Tensor<T>& gt, const LossWeights& w) {
  if (w.gamma < 0) throw DimensionError("total_loss: gamma must be >= 0");
  LossTerms<T> terms;
  terms.mrae = mrae_loss(pred, gt);
  terms.dif = spectral_difference_loss(pred, gt);
  terms.total = add(terms.mrae, scale(terms.dif, static_cast<T>(w.gamma)));
  return terms;
}

template <typename T>
Metrics eval_metrics(const Tensor<T>& pred, const Tensor<T>& gt) {
  require_same_shape(pred, gt, "eval_metrics");
  const auto& p = pred.values();
  const auto& g = gt.values();
  double rel = 0, sq = 0;
  for (Index i = 0; i < p.size(); ++i) {
    const double pi = std::clamp(static_cast<double>(p[i]), 0.0, 1.0);
    const double gi = static_cast<double>(g[i]);
    rel += std::abs(gi - pi) / std::max(gi, 1e-6);
    sq += (pi - gi) * (pi - gi);
  }
  const double n = static_cast<double>(p.size());
  Metrics m;
  m.mrae = rel / n;
  const double mse = sq / n;
  m.rmse = std::sqrt(mse);
  m.psnr = mse < 1e-10 ? 100.0 : 10.0 * std::log10(1.0 / mse);
  return m;
}

std::string format_metrics(const Metrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "mrae=%.8g rmse=%.8g psnr=%.6f", m.mrae, m.rmse, m.psnr);
  return buf;
}

template Tensor<float> mrae_loss(const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> mrae_loss(const Tensor<double>&, const Tensor<double>&, double);
template Tensor<float> spectral_difference_loss(const Tensor<float>&, const Tensor<float>&, DifNormalization);
template Tensor<double> spectral_difference_loss(const Tensor<double>&, const Tensor<double>&, DifNormalization);
template LossTerms<float> total_loss(const Tensor<float>&, const Tensor<float>&, const LossWeights&);
template LossTerms<double> total_loss(const Tensor<double>&, const Tensor<double>&, const LossWeights&);
template Metrics eval_metrics(const Tensor<float>&, const Tensor<float>&);
template Metrics eval_metrics(const Tensor<double>&, const Tensor<double>&);

}  // namespace ccnet
