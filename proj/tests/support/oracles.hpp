#pragma once

// Straight-loop reference implementations used as independent oracles. None of
// these call into the library's op implementations.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ccnet/tensor.hpp"

namespace oracle {

using ccnet::Index;

template <typename T = double>
ccnet::Tensor<T> random_tensor(const ccnet::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                               bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  ccnet::Buffer<T> values(ccnet::numel(shape));
  for (Index i = 0; i < values.size(); ++i) values[i] = static_cast<T>(dist(rng));
  return ccnet::Tensor<T>(shape, std::move(values), requires_grad);
}

inline std::vector<double> to_vec(const ccnet::Tensor<double>& t) {
  return std::vector<double>(t.values().data(), t.values().data() + t.size());
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const ccnet::Tensor<double>& a, const std::vector<double>& b) {
  return max_abs_diff(to_vec(a), b);
}

/// [p,q] x [q,r] triple loop.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, Index p, Index q,
                                  Index r) {
  std::vector<double> c(static_cast<std::size_t>(p * r), 0.0);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < r; ++j) {
      double s = 0;
      for (Index k = 0; k < q; ++k) s += a[static_cast<std::size_t>(i * q + k)] * b[static_cast<std::size_t>(k * r + j)];
      c[static_cast<std::size_t>(i * r + j)] = s;
    }
  return c;
}

/// Unbatched conv2d, x [cin,h,w], w [cout,cin/g,kh,kw], zero padding.
inline std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                                  const std::vector<double>& bias, Index cin, Index h, Index wd, Index cout, Index kh,
                                  Index kw, Index pad_h, Index pad_w, Index stride_h, Index stride_w, Index groups) {
  const Index ho = (h + 2 * pad_h - kh) / stride_h + 1;
  const Index wo = (wd + 2 * pad_w - kw) / stride_w + 1;
  const Index cin_g = cin / groups, cout_g = cout / groups;
  std::vector<double> y(static_cast<std::size_t>(cout * ho * wo), 0.0);
  for (Index co = 0; co < cout; ++co) {
    const Index g = co / cout_g;
    for (Index oy = 0; oy < ho; ++oy)
      for (Index ox = 0; ox < wo; ++ox) {
        double s = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(co)];
        for (Index ci = 0; ci < cin_g; ++ci)
          for (Index ky = 0; ky < kh; ++ky)
            for (Index kx = 0; kx < kw; ++kx) {
              const Index iy = oy * stride_h - pad_h + ky, ix = ox * stride_w - pad_w + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              s += x[static_cast<std::size_t>(((g * cin_g + ci) * h + iy) * wd + ix)] *
                   w[static_cast<std::size_t>(((co * cin_g + ci) * kh + ky) * kw + kx)];
            }
        y[static_cast<std::size_t>((co * ho + oy) * wo + ox)] = s;
      }
  }
  return y;
}

/// Unbatched, ungrouped conv3d, x [cin,d,h,w], w [cout,cin,kd,kh,kw].
inline std::vector<double> conv3d(const std::vector<double>& x, const std::vector<double>& w,
                                  const std::vector<double>& bias, Index cin, Index d, Index h, Index wd, Index cout,
                                  Index kd, Index kh, Index kw, Index pd, Index ph, Index pw) {
  const Index dout = d + 2 * pd - kd + 1, hout = h + 2 * ph - kh + 1, wout = wd + 2 * pw - kw + 1;
  std::vector<double> y(static_cast<std::size_t>(cout * dout * hout * wout), 0.0);
  for (Index co = 0; co < cout; ++co)
    for (Index oz = 0; oz < dout; ++oz)
      for (Index oy = 0; oy < hout; ++oy)
        for (Index ox = 0; ox < wout; ++ox) {
          double s = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(co)];
          for (Index ci = 0; ci < cin; ++ci)
            for (Index kz = 0; kz < kd; ++kz)
              for (Index ky = 0; ky < kh; ++ky)
                for (Index kx = 0; kx < kw; ++kx) {
                  const Index iz = oz - pd + kz, iy = oy - ph + ky, ix = ox - pw + kx;
                  if (iz < 0 || iz >= d || iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                  s += x[static_cast<std::size_t>(((ci * d + iz) * h + iy) * wd + ix)] *
                       w[static_cast<std::size_t>((((co * cin + ci) * kd + kz) * kh + ky) * kw + kx)];
                }
          y[static_cast<std::size_t>(((co * dout + oz) * hout + oy) * wout + ox)] = s;
        }
  return y;
}

/// Softmax of one vector in long double.
inline std::vector<double> softmax(const std::vector<double>& v) {
  long double total = 0;
  std::vector<long double> e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    e[i] = std::exp(static_cast<long double>(v[i]));
    total += e[i];
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(e[i] / total);
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace oracle
