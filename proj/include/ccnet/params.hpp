#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ccnet/tensor.hpp"

namespace ccnet {

template <typename T>
using ParamVisitor = std::function<void(const std::string& name, Tensor<T>& param)>;

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

/// Creates trainable leaves. Weights are He-uniform over their fan-in,
/// U(-sqrt(6 / fan_in), sqrt(6 / fan_in)), drawn from a 64-bit Mersenne
/// Twister in creation order so a seed fixes every value on every platform.
template <typename T>
class ParamFactory {
 public:
  explicit ParamFactory(std::uint64_t seed) : rng_(seed) {}

  Tensor<T> weight(const Shape& shape, Index fan_in);
  Tensor<T> constant(const Shape& shape, T value) { return Tensor<T>::full(shape, value, true); }
  Tensor<T> zeros(const Shape& shape) { return constant(shape, T(0)); }
  Tensor<T> ones(const Shape& shape) { return constant(shape, T(1)); }

 private:
  std::mt19937_64 rng_;
};

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Flattens a parameter struct into (name, tensor) pairs in visit order.
template <typename T, typename Params>
NamedTensors<T> collect_params(Params& params, const std::string& prefix = "") {
  NamedTensors<T> out;
  params.visit(prefix, [&](const std::string& name, Tensor<T>& t) { out.emplace_back(name, t); });
  return out;
}

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace ccnet
