#include "acfpn/attention.hpp"

#include "acfpn/ops.hpp"

namespace acfpn {

template <typename T>
CxamOutput<T> cxam_forward(const Tensor<T>& f, const CxamWeights<T>& weights) {
  const ConvSpec one = ConvSpec::make(1);
  const Tensor<T> q = conv2d(f, weights.wq, weights.bq, one);
  const Tensor<T> k = conv2d(f, weights.wk, weights.bk, one);
  if (q.shape.c != k.shape.c) {
    shape_error("cxam: wq and wk must share their output width");
  }
  const Tensor<T> r = affinity_matrix(q, k);
  CxamOutput<T> out;
  out.attn = attn_collapse(r);
  out.v = conv2d(f, weights.wv, weights.bv, one);
  out.e = mul_attention(out.v, out.attn);
  return out;
}

template <typename T>
CnamOutput<T> cnam_forward(const Tensor<T>& f5, const Tensor<T>& v,
                           const CnamWeights<T>& weights) {
  if (f5.shape.n != v.shape.n || f5.shape.h != v.shape.h || f5.shape.w != v.shape.w) {
    shape_error("cnam: f5 " + f5.shape.str() + " and v " + v.shape.str() +
                " must agree on batch and spatial size");
  }
  const ConvSpec one = ConvSpec::make(1);
  const Tensor<T> p = conv2d(f5, weights.wp, weights.bp, one);
  const Tensor<T> z = conv2d(f5, weights.wz, weights.bz, one);
  if (p.shape.c != z.shape.c) {
    shape_error("cnam: wp and wz must share their output width");
  }
  const Tensor<T> s = affinity_matrix(p, z);
  CnamOutput<T> out;
  out.attn = attn_collapse(s);
  out.d = mul_attention(v, out.attn);
  return out;
}

template <typename T>
Tensor<T> am_fuse(const Tensor<T>& f, const Tensor<T>& e, const Tensor<T>& d) {
  return add(add(f, e), d);
}

template <typename T>
TensorMap<T> cxam_backward(const Tensor<T>& f, const CxamWeights<T>& weights,
                           const Tensor<T>& grad_e, const Tensor<T>& grad_v,
                           const Tensor<T>& grad_attn) {
  const ConvSpec one = ConvSpec::make(1);
  const Tensor<T> q = conv2d(f, weights.wq, weights.bq, one);
  const Tensor<T> k = conv2d(f, weights.wk, weights.bk, one);
  const Tensor<T> r = affinity_matrix(q, k);
  const Tensor<T> attn = attn_collapse(r);
  const Tensor<T> v = conv2d(f, weights.wv, weights.bv, one);

  auto [gv_mul, gattn_mul] = mul_attention_backward(v, attn, grad_e);
  const Tensor<T> gv = add(gv_mul, grad_v);
  const Tensor<T> gattn = add(gattn_mul, grad_attn);
  const Tensor<T> gr = attn_collapse_backward(r, gattn);
  auto [gq, gk] = affinity_backward(q, k, gr);

  GradPair<T> gq_conv = conv2d_backward(f, weights.wq, weights.bq, one, gq);
  GradPair<T> gk_conv = conv2d_backward(f, weights.wk, weights.bk, one, gk);
  GradPair<T> gv_conv = conv2d_backward(f, weights.wv, weights.bv, one, gv);

  TensorMap<T> grads;
  grads["wq"] = std::move(gq_conv.grads.at("weight"));
  grads["bq"] = std::move(gq_conv.grads.at("bias"));
  grads["wk"] = std::move(gk_conv.grads.at("weight"));
  grads["bk"] = std::move(gk_conv.grads.at("bias"));
  grads["wv"] = std::move(gv_conv.grads.at("weight"));
  grads["bv"] = std::move(gv_conv.grads.at("bias"));
  grads["f"] = add(add(gq_conv.grads.at("input"), gk_conv.grads.at("input")),
                   gv_conv.grads.at("input"));
  return grads;
}

template <typename T>
TensorMap<T> cnam_backward(const Tensor<T>& f5, const Tensor<T>& v, const CnamWeights<T>& weights,
                           const Tensor<T>& grad_d, const Tensor<T>& grad_attn) {
  const ConvSpec one = ConvSpec::make(1);
  const Tensor<T> p = conv2d(f5, weights.wp, weights.bp, one);
  const Tensor<T> z = conv2d(f5, weights.wz, weights.bz, one);
  const Tensor<T> s = affinity_matrix(p, z);
  const Tensor<T> attn = attn_collapse(s);

  auto [gv, gattn_mul] = mul_attention_backward(v, attn, grad_d);
  const Tensor<T> gattn = add(gattn_mul, grad_attn);
  const Tensor<T> gs = attn_collapse_backward(s, gattn);
  auto [gp, gz] = affinity_backward(p, z, gs);

  GradPair<T> gp_conv = conv2d_backward(f5, weights.wp, weights.bp, one, gp);
  GradPair<T> gz_conv = conv2d_backward(f5, weights.wz, weights.bz, one, gz);

  TensorMap<T> grads;
  grads["wp"] = std::move(gp_conv.grads.at("weight"));
  grads["bp"] = std::move(gp_conv.grads.at("bias"));
  grads["wz"] = std::move(gz_conv.grads.at("weight"));
  grads["bz"] = std::move(gz_conv.grads.at("bias"));
  grads["f5"] = add(gp_conv.grads.at("input"), gz_conv.grads.at("input"));
  grads["v"] = std::move(gv);
  return grads;
}

std::string append_cxam(LayerGraph& g, const std::string& input, std::int64_t channels,
                        std::int64_t attn_channels, const std::string& prefix) {
  const ConvSpec one = ConvSpec::make(1);
  const std::string q = add_conv(g, prefix + "_q", input, channels, attn_channels, one);
  const std::string k = add_conv(g, prefix + "_k", input, channels, attn_channels, one);
  const std::string r = add_affinity(g, prefix + "_affinity", q, k);
  const std::string attn = add_attn_collapse(g, prefix + "_attn", r);
  const std::string v = add_conv(g, prefix + "_v", input, channels, channels, one);
  return add_mul_attention(g, prefix + "_out", v, attn);
}

std::string append_cnam(LayerGraph& g, const std::string& f5, const std::string& value,
                        std::int64_t f5_channels, std::int64_t value_channels,
                        std::int64_t attn_channels, const std::string& prefix) {
  (void)value_channels;
  const ConvSpec one = ConvSpec::make(1);
  const std::string p = add_conv(g, prefix + "_p", f5, f5_channels, attn_channels, one);
  const std::string z = add_conv(g, prefix + "_z", f5, f5_channels, attn_channels, one);
  const std::string s = add_affinity(g, prefix + "_affinity", p, z);
  const std::string attn = add_attn_collapse(g, prefix + "_attn", s);
  return add_mul_attention(g, prefix + "_out", value, attn);
}

LayerGraph cxam_build(std::int64_t channels, std::int64_t attn_channels) {
  LayerGraph g;
  add_input(g, "f", channels);
  const std::string out = append_cxam(g, "f", channels, attn_channels);
  g.outputs = {out, "CxAM_v", "CxAM_attn"};
  g.validate();
  return g;
}

LayerGraph cnam_build(std::int64_t f5_channels, std::int64_t value_channels,
                      std::int64_t attn_channels) {
  LayerGraph g;
  add_input(g, "f5", f5_channels);
  add_input(g, "v", value_channels);
  const std::string out = append_cnam(g, "f5", "v", f5_channels, value_channels, attn_channels);
  g.outputs = {out, "CnAM_attn"};
  g.validate();
  return g;
}

#define ACFPN_INSTANTIATE_ATTENTION(T)                                                       \
  template struct CxamWeights<T>;                                                            \
  template struct CnamWeights<T>;                                                            \
  template CxamOutput<T> cxam_forward<T>(const Tensor<T>&, const CxamWeights<T>&);           \
  template CnamOutput<T> cnam_forward<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                         const CnamWeights<T>&);                             \
  template Tensor<T> am_fuse<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
  template TensorMap<T> cxam_backward<T>(const Tensor<T>&, const CxamWeights<T>&,            \
                                         const Tensor<T>&, const Tensor<T>&,                 \
                                         const Tensor<T>&);                                  \
  template TensorMap<T> cnam_backward<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                         const CnamWeights<T>&, const Tensor<T>&,            \
                                         const Tensor<T>&);

ACFPN_INSTANTIATE_ATTENTION(float)
ACFPN_INSTANTIATE_ATTENTION(double)

#undef ACFPN_INSTANTIATE_ATTENTION

}  // namespace acfpn
