#include "acfpn/pyramid.hpp"

#include <stdexcept>

namespace acfpn {

void BackboneConfig::validate() const {
  if (stem_channels < 1) throw std::invalid_argument("backbone: stem channels must be positive");
  for (std::int64_t c : stage_channels) {
    if (c < 1) throw std::invalid_argument("backbone: stage channels must be positive");
  }
}

BackboneConfig BackboneConfig::scaled(std::int64_t divisor) const {
  BackboneConfig c = *this;
  auto shrink = [divisor](std::int64_t v) { return std::max<std::int64_t>(1, v / divisor); };
  c.stem_channels = shrink(stem_channels);
  for (auto& v : c.stage_channels) v = shrink(v);
  return c;
}

AmConfig AmConfig::scaled(std::int64_t divisor) const {
  AmConfig c = *this;
  auto shrink = [divisor](std::int64_t v) { return std::max<std::int64_t>(1, v / divisor); };
  c.cxam_channels = shrink(cxam_channels);
  c.cnam_channels = shrink(cnam_channels);
  return c;
}

void AcfpnConfig::validate() const {
  backbone.validate();
  cem.validate();
  if (backbone.stage_channels[3] != cem.in_channels) {
    throw std::invalid_argument("acfpn: backbone f5 channels " +
                                std::to_string(backbone.stage_channels[3]) +
                                " != cem input channels " + std::to_string(cem.in_channels));
  }
  if (pyramid.lateral_channels != cem.out_channels) {
    throw std::invalid_argument("acfpn: lateral channels must equal the cem output width");
  }
  if (am.enabled() && (am.cxam_channels < 1 || am.cnam_channels < 1)) {
    throw std::invalid_argument("acfpn: attention widths must be positive");
  }
}

AcfpnConfig AcfpnConfig::scaled(std::int64_t divisor) const {
  AcfpnConfig c = *this;
  c.backbone = backbone.scaled(divisor);
  c.cem = cem.scaled(divisor);
  c.am = am.scaled(divisor);
  c.pyramid.lateral_channels = c.cem.out_channels;
  return c;
}

void check_image_shape(const Shape& s) {
  if (s.c != 3) shape_error("backbone: image must have 3 channels, got " + s.str());
  if (s.h < 32 || s.w < 32 || s.h % 32 != 0 || s.w % 32 != 0) {
    shape_error("backbone: image height and width must be positive multiples of 32, got " +
                s.str());
  }
}

namespace {

// stem (stride 2) + four stride-2 stages: c2..c5 at strides 4/8/16/32
void append_backbone(LayerGraph& g, const BackboneConfig& config) {
  config.validate();
  add_input(g, "image", 3);
  const std::string stem = add_conv(g, "stem_conv", "image", 3, config.stem_channels,
                                    ConvSpec::make(3, 1, 1), /*fused_relu=*/true);
  const std::string pooled = add_max_pool(g, "stem_pool", stem, 2, 2);
  std::string prev = pooled;
  std::int64_t prev_c = config.stem_channels;
  for (int k = 0; k < 4; ++k) {
    const std::string name = "c" + std::to_string(k + 2);
    prev = add_conv(g, name, prev, prev_c, config.stage_channels[static_cast<std::size_t>(k)],
                    ConvSpec::make(3, 2, 1), /*fused_relu=*/true);
    prev_c = config.stage_channels[static_cast<std::size_t>(k)];
  }
}

}  // namespace

LayerGraph backbone_build(const BackboneConfig& config) {
  LayerGraph g;
  append_backbone(g, config);
  g.outputs = {"c2", "c3", "c4", "c5"};
  g.validate();
  return g;
}

LayerGraph acfpn_build(const AcfpnConfig& config) {
  config.validate();
  LayerGraph g;
  append_backbone(g, config.backbone);

  const std::string cem_out = append_cem(g, config.cem, "c5");

  // attention over the context feature; the top of the pyramid is the fused
  // representation (or the raw context feature when attention is disabled)
  std::string top = cem_out;
  if (config.am.enabled()) {
    const ConvSpec one = ConvSpec::make(1);
    std::vector<std::string> fused = {cem_out};
    const std::string v =
        add_conv(g, "CxAM_v", cem_out, config.cem.out_channels, config.cem.out_channels, one);
    if (config.am.cxam) {
      const std::string q = add_conv(g, "CxAM_q", cem_out, config.cem.out_channels,
                                     config.am.cxam_channels, one);
      const std::string k = add_conv(g, "CxAM_k", cem_out, config.cem.out_channels,
                                     config.am.cxam_channels, one);
      const std::string r = add_affinity(g, "CxAM_affinity", q, k);
      const std::string attn = add_attn_collapse(g, "CxAM_attn", r);
      fused.push_back(add_mul_attention(g, "CxAM_out", v, attn));
    }
    if (config.am.cnam) {
      fused.push_back(append_cnam(g, "c5", v, config.cem.in_channels, config.cem.out_channels,
                                  config.am.cnam_channels));
    }
    top = add_sum(g, "AM_fuse", fused);
  }

  // FPN top-down pathway
  const std::int64_t lc = config.pyramid.lateral_channels;
  const ConvSpec one = ConvSpec::make(1);
  const ConvSpec smooth = ConvSpec::make(3, 1, 1);
  std::string m = top;  // m5
  std::vector<std::string> merged = {m};
  for (int k = 4; k >= 2; --k) {
    const std::string level = std::to_string(k);
    const std::string lateral =
        add_conv(g, "lateral_c" + level, "c" + level,
                 config.backbone.stage_channels[static_cast<std::size_t>(k - 2)], lc, one);
    const std::string up = add_nearest_upsample2x(g, "m" + std::to_string(k + 1) + "_up", m);
    m = add_sum(g, "m" + level, {lateral, up});
    merged.push_back(m);
  }
  // merged = {m5, m4, m3, m2}
  add_conv(g, "p5", merged[0], lc, lc, smooth);
  add_conv(g, "p4", merged[1], lc, lc, smooth);
  add_conv(g, "p3", merged[2], lc, lc, smooth);
  add_conv(g, "p2", merged[3], lc, lc, smooth);
  add_max_pool(g, "p6", "p5", 1, 2);

  g.outputs = {"p2", "p3", "p4", "p5", "p6"};
  g.validate();
  return g;
}

template <typename T>
BackboneFeatures<T> backbone_forward(const LayerGraph& backbone, const ParamDict<T>& weights,
                                     const Tensor<T>& image) {
  check_image_shape(image.shape);
  TensorMap<T> inputs;
  inputs["image"] = image;
  TensorMap<T> acts = graph_forward(backbone, weights, inputs);
  BackboneFeatures<T> f;
  f.f2 = std::move(acts.at("c2"));
  f.f3 = std::move(acts.at("c3"));
  f.f4 = std::move(acts.at("c4"));
  f.f5 = std::move(acts.at("c5"));
  return f;
}

template <typename T>
const Tensor<T>& Pyramid<T>::level(int k) const {
  switch (k) {
    case 2: return p2;
    case 3: return p3;
    case 4: return p4;
    case 5: return p5;
    case 6: return p6;
  }
  throw std::invalid_argument("pyramid: level must be in [2, 6]");
}

template <typename T>
Pyramid<T> acfpn_forward(const LayerGraph& net, const ParamDict<T>& weights,
                         const Tensor<T>& image) {
  check_image_shape(image.shape);
  TensorMap<T> inputs;
  inputs["image"] = image;
  TensorMap<T> acts = graph_forward(net, weights, inputs);
  Pyramid<T> p;
  p.p2 = std::move(acts.at("p2"));
  p.p3 = std::move(acts.at("p3"));
  p.p4 = std::move(acts.at("p4"));
  p.p5 = std::move(acts.at("p5"));
  p.p6 = std::move(acts.at("p6"));
  return p;
}

template <typename T>
GraphGrads<T> pyramid_backward(const LayerGraph& net, const ParamDict<T>& weights,
                               const Tensor<T>& image, const TensorMap<T>& level_grads) {
  check_image_shape(image.shape);
  TensorMap<T> inputs;
  inputs["image"] = image;
  TensorMap<T> acts = graph_forward(net, weights, inputs);
  return graph_backward(net, weights, acts, level_grads);
}

#define ACFPN_INSTANTIATE_PYRAMID(T)                                                         \
  template struct Pyramid<T>;                                                                \
  template BackboneFeatures<T> backbone_forward<T>(const LayerGraph&, const ParamDict<T>&,   \
                                                   const Tensor<T>&);                        \
  template Pyramid<T> acfpn_forward<T>(const LayerGraph&, const ParamDict<T>&,               \
                                       const Tensor<T>&);                                    \
  template GraphGrads<T> pyramid_backward<T>(const LayerGraph&, const ParamDict<T>&,         \
                                             const Tensor<T>&, const TensorMap<T>&);

ACFPN_INSTANTIATE_PYRAMID(float)
ACFPN_INSTANTIATE_PYRAMID(double)

#undef ACFPN_INSTANTIATE_PYRAMID

}  // namespace acfpn
