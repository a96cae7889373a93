#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "acfpn/cem.hpp"
#include "acfpn/graph.hpp"

namespace acfpn {

// Static complexity accounting over a LayerGraph.
//
// Parameter counts are exact: co*ci*kh*kw + co per biased convolution, plus
// the offset branch (2*kh*kw*ci*kh*kw + 2*kh*kw) of deformable nodes.
//
// The work unit is the multiply-accumulate. Conventions:
//   conv            co*ci*kh*kw*oh*ow
//   deform conv     main conv + offset conv + 4*ci*kh*kw*oh*ow for the
//                   bilinear samples (4 MACs per sample per tap, samples
//                   shared across output channels)
//   affinity        c'*N^2 with N = h*w
//   everything else one op per output element (pooling, resize, upsample,
//                   sums, sigmoid/collapse, attention scaling)
// Counts assume batch 1; activations are not counted.

struct NodeComplexity {
  std::string name;
  std::string kind;
  Shape output;
  std::int64_t params = 0;
  std::int64_t macs = 0;
};

struct ComplexityReport {
  std::vector<NodeComplexity> nodes;
  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;
};

std::int64_t count_params(const LayerGraph& g);

/// MACs for a run at the given input spatial size (applied to every graph
/// input; batch 1).
std::int64_t count_macs(const LayerGraph& g, std::int64_t in_h, std::int64_t in_w);

ComplexityReport complexity_report(const LayerGraph& g, std::int64_t in_h, std::int64_t in_w);

/// Receptive-field state after a chain of layers: extent in input pixels,
/// effective stride (jump), and the centre offset of the first output.
struct RfSpec {
  std::int64_t rf_h = 1, rf_w = 1;
  std::int64_t jump_h = 1, jump_w = 1;
  double start_h = 0.5, start_w = 0.5;
};

/// Standard recurrence: rf += (k-1)*d*jump; start += ((k-1)/2*d - p)*jump;
/// jump *= s. Pooling layers are ConvSpecs with dilation 1.
RfSpec receptive_field(std::span<const ConvSpec> chain, RfSpec initial = RfSpec{});

/// The dilated-path chain of the module in dense order (1x1 + 3x3 per rate).
std::vector<ConvSpec> cem_path_chain(const CemConfig& config);

/// Receptive-field growth (pixels) of the dense path stack over its input,
/// entering at the given effective stride.
std::int64_t cem_rf_growth(const CemConfig& config, std::int64_t input_jump = 32);

}  // namespace acfpn
