#include "acfpn/analysis.hpp"

namespace acfpn {

namespace {

std::int64_t node_params(const LayerNode& node) {
  if (!node.has_params()) return 0;
  const std::int64_t k = static_cast<std::int64_t>(node.spec.kh) * node.spec.kw;
  std::int64_t p = node.out_channels * node.in_channels * k;
  if (node.has_bias) p += node.out_channels;
  if (node.kind == OpKind::kDeformConv) {
    const std::int64_t oc = 2 * k;
    p += oc * node.in_channels * k + oc;
  }
  return p;
}

std::int64_t node_macs(const LayerNode& node, const Shape& out,
                       const std::map<std::string, Shape>& shapes) {
  const std::int64_t out_elems = out.c * out.h * out.w;  // batch 1
  switch (node.kind) {
    case OpKind::kInput:
      return 0;
    case OpKind::kConv: {
      const std::int64_t k = static_cast<std::int64_t>(node.spec.kh) * node.spec.kw;
      return node.out_channels * node.in_channels * k * out.h * out.w;
    }
    case OpKind::kDeformConv: {
      const std::int64_t k = static_cast<std::int64_t>(node.spec.kh) * node.spec.kw;
      const std::int64_t main = node.out_channels * node.in_channels * k * out.h * out.w;
      const std::int64_t offset = (2 * k) * node.in_channels * k * out.h * out.w;
      const std::int64_t sampling = 4 * node.in_channels * k * out.h * out.w;
      return main + offset + sampling;
    }
    case OpKind::kAffinity: {
      const Shape& q = shapes.at(node.inputs[0]);
      const std::int64_t n_pos = q.h * q.w;
      return q.c * n_pos * n_pos;
    }
    default:
      return out_elems;
  }
}

}  // namespace

std::int64_t count_params(const LayerGraph& g) {
  g.validate();
  std::int64_t total = 0;
  for (const LayerNode& node : g.nodes) total += node_params(node);
  return total;
}

std::int64_t count_macs(const LayerGraph& g, std::int64_t in_h, std::int64_t in_w) {
  return complexity_report(g, in_h, in_w).total_macs;
}

ComplexityReport complexity_report(const LayerGraph& g, std::int64_t in_h, std::int64_t in_w) {
  std::map<std::string, Shape> input_shapes;
  for (const LayerNode& node : g.nodes) {
    if (node.kind == OpKind::kInput) {
      input_shapes[node.name] = Shape{1, node.out_channels, in_h, in_w};
    }
  }
  const std::map<std::string, Shape> shapes = infer_shapes(g, input_shapes);

  ComplexityReport report;
  report.nodes.reserve(g.nodes.size());
  for (const LayerNode& node : g.nodes) {
    NodeComplexity nc;
    nc.name = node.name;
    nc.kind = op_kind_name(node.kind);
    nc.output = shapes.at(node.name);
    nc.params = node_params(node);
    nc.macs = node_macs(node, nc.output, shapes);
    report.total_params += nc.params;
    report.total_macs += nc.macs;
    report.nodes.push_back(std::move(nc));
  }
  return report;
}

RfSpec receptive_field(std::span<const ConvSpec> chain, RfSpec initial) {
  RfSpec rf = initial;
  for (const ConvSpec& spec : chain) {
    spec.validate();
    rf.rf_h += static_cast<std::int64_t>(spec.kh - 1) * spec.dh * rf.jump_h;
    rf.rf_w += static_cast<std::int64_t>(spec.kw - 1) * spec.dw * rf.jump_w;
    rf.start_h += ((spec.kh - 1) / 2.0 * spec.dh - spec.ph) * static_cast<double>(rf.jump_h);
    rf.start_w += ((spec.kw - 1) / 2.0 * spec.dw - spec.pw) * static_cast<double>(rf.jump_w);
    rf.jump_h *= spec.sh;
    rf.jump_w *= spec.sw;
  }
  return rf;
}

std::vector<ConvSpec> cem_path_chain(const CemConfig& config) {
  config.validate();
  std::vector<ConvSpec> chain;
  chain.reserve(config.rates.size() * 2);
  for (int rate : config.rates) {
    chain.push_back(ConvSpec::make(1));
    chain.push_back(ConvSpec::make(3, 1, rate, rate));
  }
  return chain;
}

std::int64_t cem_rf_growth(const CemConfig& config, std::int64_t input_jump) {
  RfSpec initial;
  initial.jump_h = initial.jump_w = input_jump;
  const std::vector<ConvSpec> chain = cem_path_chain(config);
  const RfSpec rf = receptive_field(chain, initial);
  return rf.rf_h - 1;
}

}  // namespace acfpn
