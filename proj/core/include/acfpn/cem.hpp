#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acfpn/graph.hpp"

namespace acfpn {

/// Context extraction over the stride-32 feature map: one 1x1 reduce plus
/// one dilated (optionally deformable) 3x3 conv per path, densely
/// concatenated, plus a pooled global-context branch, fused by a final 1x1.
struct CemConfig {
  std::vector<int> rates = {3, 6, 12, 18, 24};
  std::int64_t in_channels = 2048;
  std::int64_t mid_channels = 512;
  std::int64_t path_channels = 256;
  std::int64_t out_channels = 256;
  bool use_deformable = true;
  bool use_dense = true;

  void validate() const;
  /// Uniformly shrinks every channel width; used by reduced test fixtures.
  CemConfig scaled(std::int64_t divisor) const;
};

/// Input channel width of each path's 1x1 reduce. With dense connections
/// width_k = in_channels + (k-1)*path_channels; without, in_channels for all.
std::vector<std::int64_t> channel_plan(const CemConfig& config);

/// Appends the module's nodes to g, reading from input_name ("<prefix>" is
/// prepended to every node name). Returns the output node name.
std::string append_cem(LayerGraph& g, const CemConfig& config, const std::string& input_name,
                       const std::string& prefix = "");

/// Standalone graph with a single input node "f5".
LayerGraph cem_build(const CemConfig& config);

/// Runs the graph on f5 and returns the activation of its single output.
template <typename T>
Tensor<T> cem_forward(const LayerGraph& graph, const ParamDict<T>& weights, const Tensor<T>& f5);

}  // namespace acfpn
