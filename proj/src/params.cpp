#include "ccnet/params.hpp"

#include <cmath>

namespace ccnet {

template <typename T>
Tensor<T> ParamFactory<T>::weight(const Shape& shape, Index fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Buffer<T> values(numel(shape));
  for (Index i = 0; i < values.size(); ++i) {
    values[i] = static_cast<T>((2.0 * unit_uniform(rng_) - 1.0) * bound);
  }
  return Tensor<T>(shape, std::move(values), true);
}

template class ParamFactory<float>;
template class ParamFactory<double>;

}  // namespace ccnet
