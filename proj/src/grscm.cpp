#include "ccnet/grscm.hpp"

#include <string>

namespace ccnet {

void GrscmDims::validate() const {
  if (channels < 1 || c_in < 1 || groups < 1 || channels % c_in != 0) {
    throw DimensionError("grscm: channels " + std::to_string(channels) + " must be a multiple of c_in " +
                         std::to_string(c_in));
  }
  if (channels % groups != 0 || c_in % groups != 0) {
    throw DimensionError("grscm: channels " + std::to_string(channels) + " and c_in " + std::to_string(c_in) +
                         " must be divisible by groups " + std::to_string(groups));
  }
}

template <typename T>
GrscmParams<T> GrscmParams<T>::init(ParamFactory<T>& factory, const GrscmDims& dims) {
  dims.validate();
  const Index gw = dims.group_width(), n = dims.heads(), d = dims.head_width();
  GrscmParams p;
  for (Index g = 0; g < dims.groups; ++g) {
    p.wq.push_back(factory.weight({gw, gw}, gw));
    p.wk.push_back(factory.weight({gw, gw}, gw));
    p.wv.push_back(factory.weight({gw, gw}, gw));
    p.rse.push_back(factory.zeros({n, d, d}));
    p.sigma.push_back(factory.ones({n}));
  }
  p.wo = factory.weight({dims.channels, dims.channels}, dims.channels);
  return p;
}

template <typename T>
void GrscmParams<T>::visit(const std::string& prefix, const ParamVisitor<T>& f) {
  for (std::size_t g = 0; g < wq.size(); ++g) {
    const std::string gp = join_name(prefix, "g" + std::to_string(g));
    f(gp + ".wq", wq[g]);
    f(gp + ".wk", wk[g]);
    f(gp + ".wv", wv[g]);
    f(gp + ".rse", rse[g]);
    f(gp + ".sigma", sigma[g]);
  }
  f(join_name(prefix, "wo"), wo);
}

template <typename T>
std::vector<Tensor<T>> group_split(const Tensor<T>& x, Index groups) {
  const Index c = x.dim(-1);
  if (groups < 1 || c % groups != 0) {
    throw DimensionError("group_split: " + std::to_string(c) + " channels not divisible into " +
                         std::to_string(groups) + " groups");
  }
  return split(x, -1, std::vector<Index>(static_cast<std::size_t>(groups), c / groups));
}

namespace {

// [HW, n*d] -> [n, HW, d]
template <typename T>
Tensor<T> to_heads(const Tensor<T>& x, Index n, Index d) {
  return permute(reshape(x, {x.dim(0), n, d}), {1, 0, 2});
}

template <typename T>
Tensor<T> run(const Tensor<T>& x, const GrscmParams<T>& p, const GrscmDims& dims,
              std::vector<Tensor<T>>* attention) {
  dims.validate();
  if (x.rank() != 3 || x.dim(2) != dims.channels) {
    throw DimensionError("grscm: expected [H, W, " + std::to_string(dims.channels) + "], got " +
                         shape_str(x.shape()));
  }
  const Index h = x.dim(0), w = x.dim(1), hw = h * w;
  const Index n = dims.heads(), d = dims.head_width();
  const auto groups = group_split(reshape(x, {hw, dims.channels}), dims.groups);
  std::vector<Tensor<T>> merged;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Tensor<T> q = l2_normalize(to_heads(matmul(groups[g], p.wq[g]), n, d), 1);
    Tensor<T> k = l2_normalize(to_heads(matmul(groups[g], p.wk[g]), n, d), 1);
    Tensor<T> v = to_heads(matmul(groups[g], p.wv[g]), n, d);
    // Cosine similarity between band columns: [n, d, HW] x [n, HW, d].
    Tensor<T> cosine = matmul(permute(k, {0, 2, 1}), q);
    Tensor<T> logits = add(p.rse[g], mul(reshape(p.sigma[g], {n, 1, 1}), cosine));
    Tensor<T> a = softmax_lastdim(logits);
    if (attention) attention->push_back(a);
    // out[:, j] = sum_l a[j, l] v[:, l]
    Tensor<T> out = matmul(v, permute(a, {0, 2, 1}));
    merged.push_back(reshape(permute(out, {1, 0, 2}), {hw, n * d}));
  }
  Tensor<T> y = matmul(concat(merged, 1), p.wo);
  return reshape(y, {h, w, dims.channels});
}

}  // namespace

template <typename T>
Tensor<T> grscm_forward(const Tensor<T>& x, const GrscmParams<T>& p, const GrscmDims& dims) {
  return run<T>(x, p, dims, nullptr);
}

template <typename T>
std::vector<Tensor<T>> grscm_attention(const Tensor<T>& x, const GrscmParams<T>& p, const GrscmDims& dims) {
  std::vector<Tensor<T>> attention;
  run(x, p, dims, &attention);
  return attention;
}

Index attention_weight_count(const GrscmDims& dims, AttentionMode mode) {
  dims.validate();
  const Index n = dims.heads();
  if (mode == AttentionMode::Mha) return n * dims.c_in * dims.c_in;
  const Index d = dims.head_width();
  return dims.groups * n * d * d;
}

Index attention_weight_count(const ModelConfig& cfg, AttentionMode mode) {
  return attention_weight_count(GrscmDims{cfg.c_in, cfg.c_in, cfg.groups}, mode);
}

template struct GrscmParams<float>;
template struct GrscmParams<double>;
template std::vector<Tensor<float>> group_split(const Tensor<float>&, Index);
template std::vector<Tensor<double>> group_split(const Tensor<double>&, Index);
template Tensor<float> grscm_forward(const Tensor<float>&, const GrscmParams<float>&, const GrscmDims&);
template Tensor<double> grscm_forward(const Tensor<double>&, const GrscmParams<double>&, const GrscmDims&);
template std::vector<Tensor<float>> grscm_attention(const Tensor<float>&, const GrscmParams<float>&,
                                                    const GrscmDims&);
template std::vector<Tensor<double>> grscm_attention(const Tensor<double>&, const GrscmParams<double>&,
                                                     const GrscmDims&);

}  // namespace ccnet
