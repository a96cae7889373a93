#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "acfpn/tensor.hpp"

namespace acfpn {

enum class OpKind {
  kInput,
  kConv,
  kDeformConv,
  kMaxPool,
  kGlobalAvgPool,
  kBilinearResizeLike,  // resizes inputs[0] to the spatial size of inputs[1]
  kNearestUpsample2x,
  kConcat,
  kAdd,
  kReLU,
  kSigmoid,
  kAffinity,
  kAttnCollapse,
  kMulAttention,  // inputs: {value, attention map}
};

const char* op_kind_name(OpKind kind);

/// One node of a declarative computation DAG. Nodes are stored in
/// topological (declaration) order; every input must name an earlier node.
struct LayerNode {
  std::string name;
  OpKind kind = OpKind::kInput;
  std::vector<std::string> inputs;

  // convolution-like nodes
  ConvSpec spec{};
  std::int64_t in_channels = 0;
  std::int64_t out_channels = 0;
  bool has_bias = true;
  bool fused_relu = false;

  // max pool
  int pool_kh = 0, pool_kw = 0, pool_sh = 0, pool_sw = 0;

  bool has_params() const { return kind == OpKind::kConv || kind == OpKind::kDeformConv; }
};

struct LayerGraph {
  std::vector<LayerNode> nodes;
  std::vector<std::string> outputs;

  void validate() const;
  bool has_node(const std::string& name) const;
  const LayerNode& node(const std::string& name) const;
};

// Builder helpers. Each appends one node and returns its name.
std::string add_input(LayerGraph& g, const std::string& name, std::int64_t channels);
std::string add_conv(LayerGraph& g, const std::string& name, const std::string& input,
                     std::int64_t in_channels, std::int64_t out_channels, const ConvSpec& spec,
                     bool fused_relu = false, bool bias = true);
std::string add_deform_conv(LayerGraph& g, const std::string& name, const std::string& input,
                            std::int64_t in_channels, std::int64_t out_channels,
                            const ConvSpec& spec, bool fused_relu = false, bool bias = true);
std::string add_max_pool(LayerGraph& g, const std::string& name, const std::string& input,
                         int kernel, int stride);
std::string add_global_avg_pool(LayerGraph& g, const std::string& name, const std::string& input);
std::string add_bilinear_resize_like(LayerGraph& g, const std::string& name,
                                     const std::string& input, const std::string& size_ref);
std::string add_nearest_upsample2x(LayerGraph& g, const std::string& name,
                                   const std::string& input);
std::string add_concat(LayerGraph& g, const std::string& name,
                       const std::vector<std::string>& inputs);
std::string add_sum(LayerGraph& g, const std::string& name,
                    const std::vector<std::string>& inputs);
std::string add_relu(LayerGraph& g, const std::string& name, const std::string& input);
std::string add_sigmoid(LayerGraph& g, const std::string& name, const std::string& input);
std::string add_affinity(LayerGraph& g, const std::string& name, const std::string& q,
                         const std::string& k);
std::string add_attn_collapse(LayerGraph& g, const std::string& name, const std::string& input);
std::string add_mul_attention(LayerGraph& g, const std::string& name, const std::string& value,
                              const std::string& attn);

/// Static shape propagation; validates channel agreement and spec legality.
std::map<std::string, Shape> infer_shapes(const LayerGraph& g,
                                          const std::map<std::string, Shape>& input_shapes);

template <typename T>
using TensorMap = std::map<std::string, Tensor<T>>;

/// Parameters keyed "<node>.weight", "<node>.bias", "<node>.offset_weight",
/// "<node>.offset_bias".
template <typename T>
using ParamDict = std::map<std::string, Tensor<T>>;

/// Expected parameter shapes for every parameterized node.
std::map<std::string, Shape> param_shapes(const LayerGraph& g);

/// Fan-in-scaled uniform init, independently seeded per parameter name, so
/// the result does not depend on iteration order. Deformable offset branches
/// start at zero, which makes them plain dilated convolutions.
template <typename T>
ParamDict<T> init_params(const LayerGraph& g, std::uint64_t seed);

/// Executes the graph and returns every node activation.
template <typename T>
TensorMap<T> graph_forward(const LayerGraph& g, const ParamDict<T>& params,
                           const TensorMap<T>& inputs);

template <typename T>
struct GraphGrads {
  ParamDict<T> params;
  TensorMap<T> inputs;
};

/// Composes the per-op backward functions in reverse declaration order.
/// grad_outputs maps output node names to upstream gradients.
template <typename T>
GraphGrads<T> graph_backward(const LayerGraph& g, const ParamDict<T>& params,
                             const TensorMap<T>& activations, const TensorMap<T>& grad_outputs);

}  // namespace acfpn
