#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "acfpn/attention.hpp"
#include "acfpn/cem.hpp"
#include "acfpn/graph.hpp"

namespace acfpn {

/// Desk-scale stand-in for a pretrained backbone: a stride-2 stem (3x3 conv
/// + ReLU + 2x2/2 max pool) followed by four stride-2 3x3 conv stages, so the
/// stage outputs f2..f5 land on strides 4/8/16/32 with channels
/// [256, 512, 1024, 2048].
struct BackboneConfig {
  std::int64_t stem_channels = 64;
  std::array<std::int64_t, 4> stage_channels = {256, 512, 1024, 2048};

  void validate() const;
  BackboneConfig scaled(std::int64_t divisor) const;
};

struct PyramidConfig {
  std::int64_t lateral_channels = 256;
};

/// Attention-module wiring. The value projection is shared: it is built
/// whenever either sub-module is enabled.
struct AmConfig {
  bool cxam = true;
  bool cnam = true;
  std::int64_t cxam_channels = 128;  // query/key width
  std::int64_t cnam_channels = 256;  // p/z width

  bool enabled() const { return cxam || cnam; }
  AmConfig scaled(std::int64_t divisor) const;
};

struct AcfpnConfig {
  BackboneConfig backbone;
  CemConfig cem;
  AmConfig am;
  PyramidConfig pyramid;

  void validate() const;
  /// Tiny fixture with every channel width divided down.
  AcfpnConfig scaled(std::int64_t divisor) const;
};

inline constexpr const char* kPyramidLevels[5] = {"p2", "p3", "p4", "p5", "p6"};

/// Backbone-only graph: input "image" (3 channels), outputs c2..c5.
LayerGraph backbone_build(const BackboneConfig& config);

/// Full network graph: image -> backbone -> CEM -> attention -> top-down
/// pyramid. Outputs p2..p6 at strides 4/8/16/32/64, all lateral_channels
/// wide.
LayerGraph acfpn_build(const AcfpnConfig& config);

template <typename T>
struct BackboneFeatures {
  Tensor<T> f2, f3, f4, f5;
};

/// image is (n, 3, H, W) with H, W divisible by 32.
template <typename T>
BackboneFeatures<T> backbone_forward(const LayerGraph& backbone, const ParamDict<T>& weights,
                                     const Tensor<T>& image);

template <typename T>
struct Pyramid {
  Tensor<T> p2, p3, p4, p5, p6;
  const Tensor<T>& level(int k) const;
};

template <typename T>
Pyramid<T> acfpn_forward(const LayerGraph& net, const ParamDict<T>& weights,
                         const Tensor<T>& image);

/// Full reverse pass: upstream grads per pyramid level -> grads for every
/// parameter and for the image.
template <typename T>
GraphGrads<T> pyramid_backward(const LayerGraph& net, const ParamDict<T>& weights,
                               const Tensor<T>& image, const TensorMap<T>& level_grads);

void check_image_shape(const Shape& s);

}  // namespace acfpn
