#include "acfpn/cem.hpp"

#include <set>
#include <stdexcept>

namespace acfpn {

void CemConfig::validate() const {
  if (rates.empty()) throw std::invalid_argument("cem: rates must be non-empty");
  std::set<int> seen;
  for (int r : rates) {
    if (r < 1) throw std::invalid_argument("cem: dilation rates must be positive");
    if (!seen.insert(r).second) {
      throw std::invalid_argument("cem: duplicate dilation rate " + std::to_string(r));
    }
  }
  if (in_channels < 1 || mid_channels < 1 || path_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("cem: channel widths must be positive");
  }
}

CemConfig CemConfig::scaled(std::int64_t divisor) const {
  if (divisor < 1) throw std::invalid_argument("cem: scale divisor must be positive");
  CemConfig c = *this;
  auto shrink = [divisor](std::int64_t v) { return std::max<std::int64_t>(1, v / divisor); };
  c.in_channels = shrink(in_channels);
  c.mid_channels = shrink(mid_channels);
  c.path_channels = shrink(path_channels);
  c.out_channels = shrink(out_channels);
  return c;
}

std::vector<std::int64_t> channel_plan(const CemConfig& config) {
  config.validate();
  std::vector<std::int64_t> plan;
  plan.reserve(config.rates.size());
  for (std::size_t k = 0; k < config.rates.size(); ++k) {
    plan.push_back(config.use_dense
                       ? config.in_channels + static_cast<std::int64_t>(k) * config.path_channels
                       : config.in_channels);
  }
  return plan;
}

std::string append_cem(LayerGraph& g, const CemConfig& config, const std::string& input_name,
                       const std::string& prefix) {
  config.validate();
  const std::vector<std::int64_t> plan = channel_plan(config);
  auto name = [&prefix](const std::string& s) { return prefix + s; };

  // dilated paths over a running dense concatenation
  std::string running = input_name;
  std::vector<std::string> path_outputs;
  for (std::size_t k = 0; k < config.rates.size(); ++k) {
    const int rate = config.rates[k];
    const std::string tag = std::to_string(rate);
    const std::string reduce =
        add_conv(g, name("CEM_" + tag + "_1x1"), config.use_dense ? running : input_name, plan[k],
                 config.mid_channels, ConvSpec::make(1), /*fused_relu=*/true);
    const ConvSpec path_spec = ConvSpec::make(3, 1, rate, rate);
    const std::string path_name = name("CEM_" + tag + "_3x3");
    const std::string path =
        config.use_deformable
            ? add_deform_conv(g, path_name, reduce, config.mid_channels, config.path_channels,
                              path_spec, /*fused_relu=*/true)
            : add_conv(g, path_name, reduce, config.mid_channels, config.path_channels, path_spec,
                       /*fused_relu=*/true);
    path_outputs.push_back(path);
    if (config.use_dense && k + 1 < config.rates.size()) {
      running = add_concat(g, name("CEM_concat_" + std::to_string(k + 1)), {running, path});
    }
  }

  // pooled global context, broadcast back to the input resolution
  const std::string gap = add_global_avg_pool(g, name("CEM_global_context"), input_name);
  const std::string gc_reduce = add_conv(g, name("CEM_gc_reduce_1x1"), gap, config.in_channels,
                                         config.path_channels, ConvSpec::make(1),
                                         /*fused_relu=*/true);
  const std::string gc_up =
      add_bilinear_resize_like(g, name("CEM_gc_upsample"), gc_reduce, input_name);

  std::vector<std::string> gather = path_outputs;
  gather.push_back(gc_up);
  const std::string final_concat =
      add_concat(g, name("CEM_concat_" + std::to_string(config.rates.size())), gather);
  return add_conv(g, name("CEM_reduce_1x1"), final_concat,
                  static_cast<std::int64_t>(gather.size()) * config.path_channels,
                  config.out_channels, ConvSpec::make(1), /*fused_relu=*/true);
}

LayerGraph cem_build(const CemConfig& config) {
  config.validate();
  LayerGraph g;
  add_input(g, "f5", config.in_channels);
  const std::string out = append_cem(g, config, "f5");
  g.outputs = {out};
  g.validate();
  return g;
}

template <typename T>
Tensor<T> cem_forward(const LayerGraph& graph, const ParamDict<T>& weights, const Tensor<T>& f5) {
  if (graph.outputs.size() != 1) {
    throw std::invalid_argument("cem_forward: graph must have exactly one output");
  }
  TensorMap<T> inputs;
  inputs["f5"] = f5;
  TensorMap<T> acts = graph_forward(graph, weights, inputs);
  return acts.at(graph.outputs[0]);
}

template Tensor<float> cem_forward<float>(const LayerGraph&, const ParamDict<float>&,
                                          const Tensor<float>&);
template Tensor<double> cem_forward<double>(const LayerGraph&, const ParamDict<double>&,
                                            const Tensor<double>&);

}  // namespace acfpn
