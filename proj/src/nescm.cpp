#include "ccnet/nescm.hpp"

#include <string>

namespace ccnet {

void NescmDims::validate() const {
  if (channels < 1 || c_in < 1 || channels % c_in != 0) {
    throw DimensionError("nescm: channels " + std::to_string(channels) + " must be a multiple of c_in " +
                         std::to_string(c_in));
  }
  if (window < 1 || window % 2 == 0 || window > c_in) {
    throw DimensionError("nescm: window " + std::to_string(window) + " must be odd and at most c_in " +
                         std::to_string(c_in));
  }
}

template <typename T>
CmuParams<T> CmuParams<T>::init(ParamFactory<T>& factory, Index heads, Index window, bool share) {
  const Index lead = share ? 1 : heads;
  CmuParams p;
  p.gate_w = factory.weight({lead, 2, 1, 1, 1}, 2);
  p.gate_b = factory.zeros({lead});
  p.out_w = factory.weight({lead, 1, 3, 3, window}, 9 * window);
  p.out_b = factory.zeros({lead});
  return p;
}

template <typename T>
void CmuParams<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(join_name(prefix, "gate_w"), gate_w);
  f(join_name(prefix, "gate_b"), gate_b);
  f(join_name(prefix, "out_w"), out_w);
  f(join_name(prefix, "out_b"), out_b);
}

template <typename T>
NescmParams<T> NescmParams<T>::init(ParamFactory<T>& factory, const NescmDims& dims) {
  dims.validate();
  const Index n = dims.heads();
  NescmParams p;
  p.forward_cmu = CmuParams<T>::init(factory, n, dims.window, dims.share_cmu);
  p.backward_cmu = CmuParams<T>::init(factory, n, dims.window, dims.share_cmu);
  p.fuse_w = factory.weight({n, 2 * n, 1, 1, 1}, 2 * n);
  p.fuse_b = factory.zeros({n});
  return p;
}

template <typename T>
void NescmParams<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  forward_cmu.visit(join_name(prefix, "fwd"), f);
  backward_cmu.visit(join_name(prefix, "bwd"), f);
  f(join_name(prefix, "fuse_w"), fuse_w);
  f(join_name(prefix, "fuse_b"), fuse_b);
}

template <typename T>
std::vector<Tensor<T>> extract_segments(const Tensor<T>& x, Index window) {
  if (x.rank() != 4) throw DimensionError("extract_segments: expected [n, H, W, C_in], got " + shape_str(x.shape()));
  const Index bands = x.dim(3);
  if (window < 1 || window % 2 == 0) {
    throw DimensionError("extract_segments: window " + std::to_string(window) + " must be odd");
  }
  if (window > bands) {
    throw DimensionError("extract_segments: window " + std::to_string(window) + " exceeds " +
                         std::to_string(bands) + " bands");
  }
  const Index half = window / 2;
  Tensor<T> padded = pad(x, 3, half, half, PadMode::Replicate);
  std::vector<Tensor<T>> segments;
  segments.reserve(static_cast<std::size_t>(bands));
  for (Index t = 0; t < bands; ++t) segments.push_back(slice(padded, 3, t, window));
  return segments;
}

template <typename T>
CmuOutput<T> cmu_step(const Tensor<T>& memory, const Tensor<T>& segment, const CmuParams<T>& p) {
  if (memory.shape() != segment.shape() || memory.rank() != 4) {
    throw DimensionError("cmu_step: memory " + shape_str(memory.shape()) + " and segment " +
                         shape_str(segment.shape()) + " must both be [n, H, W, s]");
  }
  const Index n = memory.dim(0), h = memory.dim(1), w = memory.dim(2), s = memory.dim(3);
  if (p.out_w.dim(4) != s) {
    throw DimensionError("cmu_step: output kernel depth " + std::to_string(p.out_w.dim(4)) + " != window " +
                         std::to_string(s));
  }
  const bool shared = p.gate_w.dim(0) == 1;
  if (!shared && p.gate_w.dim(0) != n) {
    throw DimensionError("cmu_step: per-head parameters for " + std::to_string(p.gate_w.dim(0)) +
                         " heads, input has " + std::to_string(n));
  }
  Tensor<T> m5 = reshape(memory, {n, 1, h, w, s});
  Tensor<T> x5 = reshape(segment, {n, 1, h, w, s});
  Tensor<T> stacked = concat(std::vector<Tensor<T>>{m5, x5}, 1);  // [n, 2, h, w, s]

  Tensor<T> gate;
  if (shared) {
    gate = conv3d(stacked, p.gate_w, p.gate_b);
  } else {
    gate = conv3d(reshape(stacked, {2 * n, h, w, s}), p.gate_w, p.gate_b, Conv3dOptions{{0, 0, 0}, {1, 1, 1}, n});
  }
  gate = sigmoid(reshape(gate, {n, h, w, s}));
  // g * m + (1 - g) * x, written so that m == x is an exact fixed point.
  Tensor<T> next = add(segment, mul(gate, sub(memory, segment)));

  Tensor<T> mixed = add(tanh(next), segment);
  const Conv3dOptions spatial_pad{{1, 1, 0}, {1, 1, 1}, shared ? 1 : n};
  Tensor<T> y = shared ? conv3d(reshape(mixed, {n, 1, h, w, s}), p.out_w, p.out_b, spatial_pad)
                       : conv3d(mixed, p.out_w, p.out_b, spatial_pad);
  return {next, reshape(y, {n, h, w, 1})};
}

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, Index c_in) {
  const Index h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (c % c_in != 0) {
    throw DimensionError("split_heads: " + std::to_string(c) + " channels not a multiple of " + std::to_string(c_in));
  }
  return permute(reshape(x, {h, w, c / c_in, c_in}), {2, 0, 1, 3});
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  const Index n = x.dim(0), h = x.dim(1), w = x.dim(2), c_in = x.dim(3);
  return reshape(permute(x, {1, 2, 0, 3}), {h, w, n * c_in});
}

template <typename T>
NescmBranches<T> nescm_branches(const Tensor<T>& x, const NescmParams<T>& p, const NescmDims& dims) {
  dims.validate();
  if (x.rank() != 3 || x.dim(2) != dims.channels) {
    throw DimensionError("nescm: expected [H, W, " + std::to_string(dims.channels) + "], got " +
                         shape_str(x.shape()));
  }
  const Index n = dims.heads(), h = x.dim(0), w = x.dim(1);
  const auto segments = extract_segments(split_heads(x, dims.c_in), dims.window);
  const auto bands = static_cast<std::size_t>(dims.c_in);

  std::vector<Tensor<T>> forward_out, backward_out(bands);
  Tensor<T> memory = Tensor<T>::zeros({n, h, w, dims.window});
  for (std::size_t t = 0; t < bands; ++t) {
    auto step = cmu_step(memory, segments[t], p.forward_cmu);
    memory = step.memory;
    forward_out.push_back(step.output);
  }
  memory = Tensor<T>::zeros({n, h, w, dims.window});
  for (std::size_t t = bands; t-- > 0;) {
    auto step = cmu_step(memory, segments[t], p.backward_cmu);
    memory = step.memory;
    backward_out[t] = step.output;
  }
  return {concat(forward_out, 3), concat(backward_out, 3)};
}

template <typename T>
Tensor<T> nescm_forward(const Tensor<T>& x, const NescmParams<T>& p, const NescmDims& dims) {
  auto branches = nescm_branches(x, p, dims);
  Tensor<T> both = concat(std::vector<Tensor<T>>{branches.forward, branches.backward}, 0);  // [2n, H, W, C_in]
  return merge_heads(conv3d(both, p.fuse_w, p.fuse_b));
}

template struct CmuParams<float>;
template struct CmuParams<double>;
template struct NescmParams<float>;
template struct NescmParams<double>;
template std::vector<Tensor<float>> extract_segments(const Tensor<float>&, Index);
template std::vector<Tensor<double>> extract_segments(const Tensor<double>&, Index);
template CmuOutput<float> cmu_step(const Tensor<float>&, const Tensor<float>&, const CmuParams<float>&);
template CmuOutput<double> cmu_step(const Tensor<double>&, const Tensor<double>&, const CmuParams<double>&);
template NescmBranches<float> nescm_branches(const Tensor<float>&, const NescmParams<float>&, const NescmDims&);
template NescmBranches<double> nescm_branches(const Tensor<double>&, const NescmParams<double>&, const NescmDims&);
template Tensor<float> nescm_forward(const Tensor<float>&, const NescmParams<float>&, const NescmDims&);
template Tensor<double> nescm_forward(const Tensor<double>&, const NescmParams<double>&, const NescmDims&);
template Tensor<float> split_heads(const Tensor<float>&, Index);
template Tensor<double> split_heads(const Tensor<double>&, Index);
template Tensor<float> merge_heads(const Tensor<float>&);
template Tensor<double> merge_heads(const Tensor<double>&);

}  // namespace ccnet
