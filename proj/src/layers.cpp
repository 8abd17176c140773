#include "ccnet/layers.hpp"

namespace ccnet {

template <typename T>
Tensor<T> channel_map(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 3 || weight.rank() != 2 || x.dim(2) != weight.dim(0)) {
    throw DimensionError("channel_map: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
  }
  const Index h = x.dim(0), w = x.dim(1), cout = weight.dim(1);
  Tensor<T> y = matmul(reshape(x, {h * w, x.dim(2)}), weight);
  if (bias.defined()) y = add(y, bias);
  return reshape(y, {h, w, cout});
}

template <typename T>
Tensor<T> spatial_conv(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Index padding,
                       Index stride) {
  Tensor<T> chw = permute(x, {2, 0, 1});
  Tensor<T> y = conv2d(chw, weight, bias, Conv2dOptions{{padding, padding}, {stride, stride}, 1});
  return permute(y, {1, 2, 0});
}

template <typename T>
Tensor<T> conv_transpose2x2(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(0) != x.dim(2) || weight.dim(2) != 2 || weight.dim(3) != 2) {
    throw DimensionError("conv_transpose2x2: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight.shape()));
  }
  const Index h = x.dim(0), w = x.dim(1), cin = x.dim(2), cout = weight.dim(1);
  Tensor<T> blocks = matmul(reshape(x, {h * w, cin}), reshape(weight, {cin, cout * 4}));
  // [h, w, cout, 2, 2] -> [h, 2, w, 2, cout]
  Tensor<T> y = permute(reshape(blocks, {h, w, cout, 2, 2}), {0, 3, 1, 4, 2});
  y = reshape(y, {2 * h, 2 * w, cout});
  return bias.defined() ? add(y, bias) : y;
}

template Tensor<float> channel_map(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> channel_map(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template Tensor<float> spatial_conv(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, Index, Index);
template Tensor<double> spatial_conv(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, Index,
                                     Index);
template Tensor<float> conv_transpose2x2(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> conv_transpose2x2(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

}  // namespace ccnet
