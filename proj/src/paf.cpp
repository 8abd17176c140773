#include "ccnet/paf.hpp"

#include <string>

#include "ccnet/layers.hpp"

namespace ccnet {

void PafDims::validate() const {
  if (groups < 1 || channels % groups != 0) {
    throw DimensionError("paf: channels " + std::to_string(channels) + " not divisible by groups " +
                         std::to_string(groups));
  }
  if (patch < 1) throw DimensionError("paf: patch size must be >= 1");
}

template <typename T>
PafParams<T> PafParams<T>::init(ParamFactory<T>& factory, const PafDims& dims) {
  dims.validate();
  PafParams p;
  p.sia_w = factory.weight({dims.groups, 2}, 2);
  p.sia_b = factory.zeros({dims.groups});
  p.att_w = factory.weight({dims.channels, dims.channels}, dims.channels);
  p.att_b = factory.zeros({dims.channels});
  p.cp_w = factory.weight({dims.groups, dims.groups}, dims.groups);
  p.cp_b = factory.zeros({dims.groups});
  return p;
}

template <typename T>
void PafParams<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  f(join_name(prefix, "sia_w"), sia_w);
  f(join_name(prefix, "sia_b"), sia_b);
  f(join_name(prefix, "att_w"), att_w);
  f(join_name(prefix, "att_b"), att_b);
  f(join_name(prefix, "cp_w"), cp_w);
  f(join_name(prefix, "cp_b"), cp_b);
}

template <typename T>
Tensor<T> sia_compress(const Tensor<T>& progressive, const PafParams<T>& p, Index groups) {
  if (progressive.rank() != 3) throw DimensionError("sia: expected [H, W, C], got " + shape_str(progressive.shape()));
  const Index h = progressive.dim(0), w = progressive.dim(1), c = progressive.dim(2);
  if (groups < 1 || c % groups != 0) {
    throw DimensionError("sia: " + std::to_string(c) + " channels not divisible by " + std::to_string(groups) +
                         " groups");
  }
  Tensor<T> grouped = reshape(progressive, {h, w, groups, c / groups});
  Tensor<T> mean_map = mean(grouped, 3);  // [h, w, k]
  Tensor<T> max_map = max(grouped, 3);
  Tensor<T> w_mean = reshape(slice(p.sia_w, 1, 0, 1), {groups});
  Tensor<T> w_max = reshape(slice(p.sia_w, 1, 1, 1), {groups});
  return add(add(mul(mean_map, w_mean), mul(max_map, w_max)), p.sia_b);
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& x, Index patch) {
  if (x.rank() != 3) throw DimensionError("patchify: expected [H, W, C], got " + shape_str(x.shape()));
  const Index h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (patch < 1 || h % patch != 0 || w % patch != 0) {
    throw DimensionError("patchify: " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch " +
                         std::to_string(patch));
  }
  const Index th = h / patch, tw = w / patch;
  Tensor<T> tiles = permute(reshape(x, {th, patch, tw, patch, c}), {0, 2, 4, 1, 3});
  return reshape(tiles, {th * tw, c, patch * patch});
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, Index height, Index width) {
  const Index count = patches.dim(0), c = patches.dim(1), area = patches.dim(2);
  Index patch = 1;
  while (patch * patch < area) ++patch;
  if (patch * patch != area || height % patch != 0 || width % patch != 0 ||
      (height / patch) * (width / patch) != count) {
    throw DimensionError("unpatchify: patches " + shape_str(patches.shape()) + " do not tile " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const Index th = height / patch, tw = width / patch;
  Tensor<T> tiles = permute(reshape(patches, {th, tw, c, patch, patch}), {0, 3, 1, 4, 2});
  return reshape(tiles, {height, width, c});
}

namespace {

template <typename T>
struct PafTerms {
  Tensor<T> weights;     // [P, C, k]
  Tensor<T> compressed;  // [P, k, L] mapped compressed patches
};

template <typename T>
PafTerms<T> paf_terms(const Tensor<T>& attention, const Tensor<T>& progressive, const PafParams<T>& p,
                      const PafDims& dims) {
  dims.validate();
  if (attention.shape() != progressive.shape() || attention.rank() != 3 || attention.dim(2) != dims.channels) {
    throw DimensionError("paf: attention " + shape_str(attention.shape()) + " and progressive " +
                         shape_str(progressive.shape()) + " must both be [H, W, " + std::to_string(dims.channels) +
                         "]");
  }
  Tensor<T> compressed = sia_compress(progressive, p, dims.groups);
  Tensor<T> att_patches = patchify(channel_map(attention, p.att_w, p.att_b), dims.patch);
  Tensor<T> cp_patches = patchify(channel_map(compressed, p.cp_w, p.cp_b), dims.patch);
  // Zero-norm patches normalize to zero, so their similarities are exactly 0.
  Tensor<T> sim = matmul(l2_normalize(att_patches, 2), permute(l2_normalize(cp_patches, 2), {0, 2, 1}));
  return {softmax_lastdim(sim), cp_patches};
}

}  // namespace

template <typename T>
Tensor<T> paf_weights(const Tensor<T>& attention, const Tensor<T>& progressive, const PafParams<T>& p,
                      const PafDims& dims) {
  return paf_terms(attention, progressive, p, dims).weights;
}

template <typename T>
Tensor<T> paf_fuse(const Tensor<T>& attention, const Tensor<T>& progressive, const PafParams<T>& p,
                   const PafDims& dims) {
  auto terms = paf_terms(attention, progressive, p, dims);
  Tensor<T> fused = matmul(terms.weights, terms.compressed);  // [P, C, L]
  return add(attention, unpatchify(fused, attention.dim(0), attention.dim(1)));
}

template struct PafParams<float>;
template struct PafParams<double>;
template Tensor<float> sia_compress(const Tensor<float>&, const PafParams<float>&, Index);
template Tensor<double> sia_compress(const Tensor<double>&, const PafParams<double>&, Index);
template Tensor<float> patchify(const Tensor<float>&, Index);
template Tensor<double> patchify(const Tensor<double>&, Index);
template Tensor<float> unpatchify(const Tensor<float>&, Index, Index);
template Tensor<double> unpatchify(const Tensor<double>&, Index, Index);
template Tensor<float> paf_weights(const Tensor<float>&, const Tensor<float>&, const PafParams<float>&,
                                   const PafDims&);
template Tensor<double> paf_weights(const Tensor<double>&, const Tensor<double>&, const PafParams<double>&,
                                    const PafDims&);
template Tensor<float> paf_fuse(const Tensor<float>&, const Tensor<float>&, const PafParams<float>&, const PafDims&);
template Tensor<double> paf_fuse(const Tensor<double>&, const Tensor<double>&, const PafParams<double>&,
                                 const PafDims&);

}  // namespace ccnet
