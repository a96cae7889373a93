#include "acfpn/graph.hpp"

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "acfpn/deform_conv.hpp"
#include "acfpn/ops.hpp"

namespace acfpn {

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kConv: return "conv";
    case OpKind::kDeformConv: return "deform_conv";
    case OpKind::kMaxPool: return "max_pool";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kBilinearResizeLike: return "bilinear_resize";
    case OpKind::kNearestUpsample2x: return "nearest_upsample2x";
    case OpKind::kConcat: return "concat";
    case OpKind::kAdd: return "add";
    case OpKind::kReLU: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kAffinity: return "affinity";
    case OpKind::kAttnCollapse: return "attn_collapse";
    case OpKind::kMulAttention: return "mul_attention";
  }
  return "?";
}

void LayerGraph::validate() const {
  std::set<std::string> seen;
  for (const LayerNode& node : nodes) {
    if (node.name.empty()) throw std::invalid_argument("graph: empty node name");
    if (!seen.insert(node.name).second) {
      throw std::invalid_argument("graph: duplicate node name '" + node.name + "'");
    }
    if (node.kind == OpKind::kInput && !node.inputs.empty()) {
      throw std::invalid_argument("graph: input node '" + node.name + "' cannot have inputs");
    }
    for (const std::string& in : node.inputs) {
      if (!seen.count(in)) {
        throw std::invalid_argument("graph: node '" + node.name + "' references '" + in +
                                    "' which is not defined before it");
      }
    }
  }
  for (const std::string& out : outputs) {
    if (!seen.count(out)) {
      throw std::invalid_argument("graph: unknown output node '" + out + "'");
    }
  }
}

bool LayerGraph::has_node(const std::string& name) const {
  for (const LayerNode& n : nodes) {
    if (n.name == name) return true;
  }
  return false;
}

const LayerNode& LayerGraph::node(const std::string& name) const {
  for (const LayerNode& n : nodes) {
    if (n.name == name) return n;
  }
  throw std::invalid_argument("graph: no node named '" + name + "'");
}

namespace {

LayerNode& append(LayerGraph& g, LayerNode node) {
  if (g.has_node(node.name)) {
    throw std::invalid_argument("graph: duplicate node name '" + node.name + "'");
  }
  for (const std::string& in : node.inputs) {
    if (!g.has_node(in)) {
      throw std::invalid_argument("graph: node '" + node.name + "' references unknown input '" +
                                  in + "'");
    }
  }
  g.nodes.push_back(std::move(node));
  return g.nodes.back();
}

}  // namespace

std::string add_input(LayerGraph& g, const std::string& name, std::int64_t channels) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kInput;
  n.out_channels = channels;
  return append(g, std::move(n)).name;
}

std::string add_conv(LayerGraph& g, const std::string& name, const std::string& input,
                     std::int64_t in_channels, std::int64_t out_channels, const ConvSpec& spec,
                     bool fused_relu, bool bias) {
  spec.validate();
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kConv;
  n.inputs = {input};
  n.spec = spec;
  n.in_channels = in_channels;
  n.out_channels = out_channels;
  n.fused_relu = fused_relu;
  n.has_bias = bias;
  return append(g, std::move(n)).name;
}

std::string add_deform_conv(LayerGraph& g, const std::string& name, const std::string& input,
                            std::int64_t in_channels, std::int64_t out_channels,
                            const ConvSpec& spec, bool fused_relu, bool bias) {
  spec.validate();
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kDeformConv;
  n.inputs = {input};
  n.spec = spec;
  n.in_channels = in_channels;
  n.out_channels = out_channels;
  n.fused_relu = fused_relu;
  n.has_bias = bias;
  return append(g, std::move(n)).name;
}

std::string add_max_pool(LayerGraph& g, const std::string& name, const std::string& input,
                         int kernel, int stride) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kMaxPool;
  n.inputs = {input};
  n.pool_kh = n.pool_kw = kernel;
  n.pool_sh = n.pool_sw = stride;
  return append(g, std::move(n)).name;
}

std::string add_global_avg_pool(LayerGraph& g, const std::string& name, const std::string& input) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kGlobalAvgPool;
  n.inputs = {input};
  return append(g, std::move(n)).name;
}

std::string add_bilinear_resize_like(LayerGraph& g, const std::string& name,
                                     const std::string& input, const std::string& size_ref) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kBilinearResizeLike;
  n.inputs = {input, size_ref};
  return append(g, std::move(n)).name;
}

std::string add_nearest_upsample2x(LayerGraph& g, const std::string& name,
                                   const std::string& input) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kNearestUpsample2x;
  n.inputs = {input};
  return append(g, std::move(n)).name;
}

std::string add_concat(LayerGraph& g, const std::string& name,
                       const std::vector<std::string>& inputs) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kConcat;
  n.inputs = inputs;
  return append(g, std::move(n)).name;
}

std::string add_sum(LayerGraph& g, const std::string& name,
                    const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("graph: sum node needs inputs");
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kAdd;
  n.inputs = inputs;
  return append(g, std::move(n)).name;
}

std::string add_relu(LayerGraph& g, const std::string& name, const std::string& input) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kReLU;
  n.inputs = {input};
  return append(g, std::move(n)).name;
}

std::string add_sigmoid(LayerGraph& g, const std::string& name, const std::string& input) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kSigmoid;
  n.inputs = {input};
  return append(g, std::move(n)).name;
}

std::string add_affinity(LayerGraph& g, const std::string& name, const std::string& q,
                         const std::string& k) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kAffinity;
  n.inputs = {q, k};
  return append(g, std::move(n)).name;
}

std::string add_attn_collapse(LayerGraph& g, const std::string& name, const std::string& input) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kAttnCollapse;
  n.inputs = {input};
  return append(g, std::move(n)).name;
}

std::string add_mul_attention(LayerGraph& g, const std::string& name, const std::string& value,
                              const std::string& attn) {
  LayerNode n;
  n.name = name;
  n.kind = OpKind::kMulAttention;
  n.inputs = {value, attn};
  return append(g, std::move(n)).name;
}

std::map<std::string, Shape> infer_shapes(const LayerGraph& g,
                                          const std::map<std::string, Shape>& input_shapes) {
  g.validate();
  std::map<std::string, Shape> shapes;
  for (const LayerNode& node : g.nodes) {
    auto in_shape = [&](std::size_t i) -> const Shape& { return shapes.at(node.inputs.at(i)); };
    switch (node.kind) {
      case OpKind::kInput: {
        auto it = input_shapes.find(node.name);
        if (it == input_shapes.end()) {
          shape_error("graph: missing shape for input '" + node.name + "'");
        }
        if (it->second.c != node.out_channels) {
          shape_error("graph: input '" + node.name + "' expects " +
                      std::to_string(node.out_channels) + " channels, got " + it->second.str());
        }
        shapes[node.name] = it->second;
        break;
      }
      case OpKind::kConv:
      case OpKind::kDeformConv: {
        const Shape& s = in_shape(0);
        if (s.c != node.in_channels) {
          shape_error("graph: node '" + node.name + "' expects " +
                      std::to_string(node.in_channels) + " input channels, got " + s.str());
        }
        shapes[node.name] =
            Shape{s.n, node.out_channels, node.spec.out_h(s.h), node.spec.out_w(s.w)};
        break;
      }
      case OpKind::kMaxPool: {
        const Shape& s = in_shape(0);
        if (s.h < node.pool_kh || s.w < node.pool_kw) {
          shape_error("graph: pool '" + node.name + "' kernel does not fit " + s.str());
        }
        shapes[node.name] = Shape{s.n, s.c, (s.h - node.pool_kh) / node.pool_sh + 1,
                                  (s.w - node.pool_kw) / node.pool_sw + 1};
        break;
      }
      case OpKind::kGlobalAvgPool: {
        const Shape& s = in_shape(0);
        shapes[node.name] = Shape{s.n, s.c, 1, 1};
        break;
      }
      case OpKind::kBilinearResizeLike: {
        const Shape& s = in_shape(0);
        const Shape& ref = in_shape(1);
        shapes[node.name] = Shape{s.n, s.c, ref.h, ref.w};
        break;
      }
      case OpKind::kNearestUpsample2x: {
        const Shape& s = in_shape(0);
        shapes[node.name] = Shape{s.n, s.c, s.h * 2, s.w * 2};
        break;
      }
      case OpKind::kConcat: {
        Shape s = in_shape(0);
        std::int64_t c = 0;
        for (const std::string& in : node.inputs) {
          const Shape& si = shapes.at(in);
          if (si.n != s.n || si.h != s.h || si.w != s.w) {
            shape_error("graph: concat '" + node.name + "' mismatch " + s.str() + " vs " +
                        si.str());
          }
          c += si.c;
        }
        s.c = c;
        shapes[node.name] = s;
        break;
      }
      case OpKind::kAdd: {
        const Shape& s = in_shape(0);
        for (const std::string& in : node.inputs) {
          if (!(shapes.at(in) == s)) {
            shape_error("graph: sum '" + node.name + "' shape mismatch");
          }
        }
        shapes[node.name] = s;
        break;
      }
      case OpKind::kReLU:
      case OpKind::kSigmoid: {
        shapes[node.name] = in_shape(0);
        break;
      }
      case OpKind::kAffinity: {
        const Shape& q = in_shape(0);
        if (!(q == in_shape(1))) {
          shape_error("graph: affinity '" + node.name + "' q/k shape mismatch");
        }
        shapes[node.name] = Shape{q.n, q.h * q.w, q.h, q.w};
        break;
      }
      case OpKind::kAttnCollapse: {
        const Shape& s = in_shape(0);
        shapes[node.name] = Shape{s.n, 1, s.h, s.w};
        break;
      }
      case OpKind::kMulAttention: {
        const Shape& v = in_shape(0);
        const Shape& a = in_shape(1);
        if (a.c != 1 || a.n != v.n || a.h != v.h || a.w != v.w) {
          shape_error("graph: mul_attention '" + node.name + "' attention map " + a.str() +
                      " does not broadcast over " + v.str());
        }
        shapes[node.name] = v;
        break;
      }
    }
  }
  return shapes;
}

std::map<std::string, Shape> param_shapes(const LayerGraph& g) {
  std::map<std::string, Shape> out;
  for (const LayerNode& node : g.nodes) {
    if (!node.has_params()) continue;
    out[node.name + ".weight"] =
        Shape{node.out_channels, node.in_channels, node.spec.kh, node.spec.kw};
    if (node.has_bias) out[node.name + ".bias"] = Shape{1, node.out_channels, 1, 1};
    if (node.kind == OpKind::kDeformConv) {
      const std::int64_t oc = 2LL * node.spec.kh * node.spec.kw;
      out[node.name + ".offset_weight"] = Shape{oc, node.in_channels, node.spec.kh, node.spec.kw};
      out[node.name + ".offset_bias"] = Shape{1, oc, 1, 1};
    }
  }
  return out;
}

namespace {

std::uint64_t param_stream_seed(std::uint64_t seed, const std::string& name) {
  // FNV-1a over the name, mixed with the run seed
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

}  // namespace

template <typename T>
ParamDict<T> init_params(const LayerGraph& g, std::uint64_t seed) {
  ParamDict<T> params;
  for (const LayerNode& node : g.nodes) {
    if (!node.has_params()) continue;
    const double fan_in =
        static_cast<double>(node.in_channels) * node.spec.kh * node.spec.kw;
    const double bound = fan_in > 0 ? 1.0 / std::sqrt(fan_in) : 0.0;
    auto fill_uniform = [&](const std::string& key, Shape shape) {
      Tensor<T> t(shape);
      std::mt19937_64 rng(param_stream_seed(seed, key));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (T& v : t.data) v = static_cast<T>(dist(rng));
      params[key] = std::move(t);
    };
    fill_uniform(node.name + ".weight",
                 Shape{node.out_channels, node.in_channels, node.spec.kh, node.spec.kw});
    if (node.has_bias) fill_uniform(node.name + ".bias", Shape{1, node.out_channels, 1, 1});
    if (node.kind == OpKind::kDeformConv) {
      const std::int64_t oc = 2LL * node.spec.kh * node.spec.kw;
      params[node.name + ".offset_weight"] =
          Tensor<T>(Shape{oc, node.in_channels, node.spec.kh, node.spec.kw});
      params[node.name + ".offset_bias"] = Tensor<T>(Shape{1, oc, 1, 1});
    }
  }
  return params;
}

namespace {

template <typename T>
const Tensor<T>& param(const ParamDict<T>& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end()) {
    throw std::invalid_argument("graph: missing parameter '" + key + "'");
  }
  return it->second;
}

template <typename T>
DeformConv2d<T> deform_layer(const LayerNode& node, const ParamDict<T>& params) {
  DeformConv2d<T> layer;
  layer.weight = param(params, node.name + ".weight");
  if (node.has_bias) layer.bias = param(params, node.name + ".bias");
  layer.offset_weight = param(params, node.name + ".offset_weight");
  layer.offset_bias = param(params, node.name + ".offset_bias");
  layer.spec = node.spec;
  return layer;
}

}  // namespace

template <typename T>
TensorMap<T> graph_forward(const LayerGraph& g, const ParamDict<T>& params,
                           const TensorMap<T>& inputs) {
  g.validate();
  TensorMap<T> acts;
  const Tensor<T> empty_bias;
  for (const LayerNode& node : g.nodes) {
    auto in = [&](std::size_t i) -> const Tensor<T>& { return acts.at(node.inputs.at(i)); };
    switch (node.kind) {
      case OpKind::kInput: {
        auto it = inputs.find(node.name);
        if (it == inputs.end()) {
          shape_error("graph: missing input tensor '" + node.name + "'");
        }
        if (it->second.shape.c != node.out_channels) {
          shape_error("graph: input '" + node.name + "' expects " +
                      std::to_string(node.out_channels) + " channels, got " +
                      it->second.shape.str());
        }
        acts[node.name] = it->second;
        break;
      }
      case OpKind::kConv: {
        Tensor<T> y = conv2d(in(0), param(params, node.name + ".weight"),
                             node.has_bias ? param(params, node.name + ".bias") : empty_bias,
                             node.spec);
        acts[node.name] = node.fused_relu ? relu(y) : std::move(y);
        break;
      }
      case OpKind::kDeformConv: {
        Tensor<T> y = deform_conv2d(in(0), deform_layer(node, params));
        acts[node.name] = node.fused_relu ? relu(y) : std::move(y);
        break;
      }
      case OpKind::kMaxPool: {
        acts[node.name] = max_pool2d(in(0), node.pool_kh, node.pool_kw, node.pool_sh, node.pool_sw);
        break;
      }
      case OpKind::kGlobalAvgPool: {
        acts[node.name] = global_avg_pool(in(0));
        break;
      }
      case OpKind::kBilinearResizeLike: {
        const Shape ref = in(1).shape;
        acts[node.name] = bilinear_resize(in(0), ref.h, ref.w);
        break;
      }
      case OpKind::kNearestUpsample2x: {
        acts[node.name] = nearest_upsample2x(in(0));
        break;
      }
      case OpKind::kConcat: {
        std::vector<const Tensor<T>*> parts;
        parts.reserve(node.inputs.size());
        for (const std::string& name : node.inputs) parts.push_back(&acts.at(name));
        acts[node.name] = concat_channels(parts);
        break;
      }
      case OpKind::kAdd: {
        Tensor<T> acc = in(0);
        for (std::size_t i = 1; i < node.inputs.size(); ++i) acc = add(acc, in(i));
        acts[node.name] = std::move(acc);
        break;
      }
      case OpKind::kReLU: {
        acts[node.name] = relu(in(0));
        break;
      }
      case OpKind::kSigmoid: {
        acts[node.name] = sigmoid(in(0));
        break;
      }
      case OpKind::kAffinity: {
        acts[node.name] = affinity_matrix(in(0), in(1));
        break;
      }
      case OpKind::kAttnCollapse: {
        acts[node.name] = attn_collapse(in(0));
        break;
      }
      case OpKind::kMulAttention: {
        acts[node.name] = mul_attention(in(0), in(1));
        break;
      }
    }
  }
  return acts;
}

template <typename T>
GraphGrads<T> graph_backward(const LayerGraph& g, const ParamDict<T>& params,
                             const TensorMap<T>& acts, const TensorMap<T>& grad_outputs) {
  g.validate();
  GraphGrads<T> out;
  TensorMap<T> grads;
  for (const auto& [name, grad] : grad_outputs) {
    const Tensor<T>& act = acts.at(name);
    if (!(grad.shape == act.shape)) {
      shape_error("graph: upstream grad for '" + name + "' has shape " + grad.shape.str() +
                  ", activation is " + act.shape.str());
    }
    grads[name] = grad;
  }

  auto accumulate = [&](const std::string& name, Tensor<T> grad) {
    auto it = grads.find(name);
    if (it == grads.end()) {
      grads.emplace(name, std::move(grad));
    } else {
      it->second = add(it->second, grad);
    }
  };

  const Tensor<T> empty_bias;
  for (auto rit = g.nodes.rbegin(); rit != g.nodes.rend(); ++rit) {
    const LayerNode& node = *rit;
    auto git = grads.find(node.name);
    if (git == grads.end()) continue;  // node does not influence any requested output
    Tensor<T> gy = git->second;
    auto in_act = [&](std::size_t i) -> const Tensor<T>& { return acts.at(node.inputs.at(i)); };

    switch (node.kind) {
      case OpKind::kInput: {
        out.inputs[node.name] = gy;
        break;
      }
      case OpKind::kConv: {
        if (node.fused_relu) gy = relu_backward(acts.at(node.name), gy);
        const Tensor<T>& bias =
            node.has_bias ? param(params, node.name + ".bias") : empty_bias;
        GradPair<T> gp =
            conv2d_backward(in_act(0), param(params, node.name + ".weight"), bias, node.spec, gy);
        out.params[node.name + ".weight"] = std::move(gp.grads.at("weight"));
        if (node.has_bias) out.params[node.name + ".bias"] = std::move(gp.grads.at("bias"));
        accumulate(node.inputs[0], std::move(gp.grads.at("input")));
        break;
      }
      case OpKind::kDeformConv: {
        if (node.fused_relu) gy = relu_backward(acts.at(node.name), gy);
        GradPair<T> gp = deform_conv2d_backward(in_act(0), deform_layer(node, params), gy);
        out.params[node.name + ".weight"] = std::move(gp.grads.at("weight"));
        if (node.has_bias) out.params[node.name + ".bias"] = std::move(gp.grads.at("bias"));
        out.params[node.name + ".offset_weight"] = std::move(gp.grads.at("offset_weight"));
        out.params[node.name + ".offset_bias"] = std::move(gp.grads.at("offset_bias"));
        accumulate(node.inputs[0], std::move(gp.grads.at("input")));
        break;
      }
      case OpKind::kMaxPool: {
        accumulate(node.inputs[0], max_pool2d_backward(in_act(0), node.pool_kh, node.pool_kw,
                                                       node.pool_sh, node.pool_sw, gy));
        break;
      }
      case OpKind::kGlobalAvgPool: {
        accumulate(node.inputs[0], global_avg_pool_backward(in_act(0).shape, gy));
        break;
      }
      case OpKind::kBilinearResizeLike: {
        accumulate(node.inputs[0], bilinear_resize_backward(in_act(0).shape, gy));
        break;
      }
      case OpKind::kNearestUpsample2x: {
        accumulate(node.inputs[0], nearest_upsample2x_backward(in_act(0).shape, gy));
        break;
      }
      case OpKind::kConcat: {
        std::int64_t c0 = 0;
        for (const std::string& name : node.inputs) {
          const std::int64_t c1 = c0 + acts.at(name).shape.c;
          accumulate(name, slice_channels(gy, c0, c1));
          c0 = c1;
        }
        break;
      }
      case OpKind::kAdd: {
        for (const std::string& name : node.inputs) accumulate(name, gy);
        break;
      }
      case OpKind::kReLU: {
        accumulate(node.inputs[0], relu_backward(in_act(0), gy));
        break;
      }
      case OpKind::kSigmoid: {
        accumulate(node.inputs[0], sigmoid_backward(acts.at(node.name), gy));
        break;
      }
      case OpKind::kAffinity: {
        auto [gq, gk] = affinity_backward(in_act(0), in_act(1), gy);
        accumulate(node.inputs[0], std::move(gq));
        accumulate(node.inputs[1], std::move(gk));
        break;
      }
      case OpKind::kAttnCollapse: {
        accumulate(node.inputs[0], attn_collapse_backward(in_act(0), gy));
        break;
      }
      case OpKind::kMulAttention: {
        auto [gv, ga] = mul_attention_backward(in_act(0), in_act(1), gy);
        accumulate(node.inputs[0], std::move(gv));
        accumulate(node.inputs[1], std::move(ga));
        break;
      }
    }
  }
  return out;
}

template ParamDict<float> init_params<float>(const LayerGraph&, std::uint64_t);
template ParamDict<double> init_params<double>(const LayerGraph&, std::uint64_t);
template TensorMap<float> graph_forward<float>(const LayerGraph&, const ParamDict<float>&,
                                               const TensorMap<float>&);
template TensorMap<double> graph_forward<double>(const LayerGraph&, const ParamDict<double>&,
                                                 const TensorMap<double>&);
template GraphGrads<float> graph_backward<float>(const LayerGraph&, const ParamDict<float>&,
                                                 const TensorMap<float>&, const TensorMap<float>&);
template GraphGrads<double> graph_backward<double>(const LayerGraph&, const ParamDict<double>&,
                                                   const TensorMap<double>&,
                                                   const TensorMap<double>&);

}  // namespace acfpn
