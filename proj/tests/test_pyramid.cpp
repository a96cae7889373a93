#include <doctest.h>

#include "acfpn/ops.hpp"
#include "acfpn/parallel.hpp"
#include "acfpn/pyramid.hpp"
#include "oracles.hpp"

using namespace acfpn;

namespace {

AcfpnConfig tiny_config() { return AcfpnConfig{}.scaled(16); }

}  // namespace

TEST_CASE("backbone stride and channel ladder") {
  const BackboneConfig cfg;
  const LayerGraph g = backbone_build(cfg);

  SUBCASE("128 input") {
    const auto shapes = infer_shapes(g, {{"image", Shape{1, 3, 128, 128}}});
    CHECK(shapes.at("c2") == Shape{1, 256, 32, 32});
    CHECK(shapes.at("c3") == Shape{1, 512, 16, 16});
    CHECK(shapes.at("c4") == Shape{1, 1024, 8, 8});
    CHECK(shapes.at("c5") == Shape{1, 2048, 4, 4});
  }
  SUBCASE("512 input") {
    const auto shapes = infer_shapes(g, {{"image", Shape{1, 3, 512, 512}}});
    CHECK(shapes.at("c2") == Shape{1, 256, 128, 128});
  }
}

TEST_CASE("backbone rejects sizes not divisible by 32") {
  const LayerGraph g = backbone_build(BackboneConfig{}.scaled(16));
  const ParamDict<float> params = init_params<float>(g, 1);
  CHECK_THROWS_AS(backbone_forward(g, params, TensorF(Shape{1, 3, 100, 96})),
                  std::invalid_argument);
  CHECK_THROWS_AS(backbone_forward(g, params, TensorF(Shape{1, 2, 64, 64})),
                  std::invalid_argument);
}

TEST_CASE("backbone zero image with zero biases gives zero features") {
  const LayerGraph g = backbone_build(BackboneConfig{}.scaled(16));
  ParamDict<double> params = init_params<double>(g, 2);
  for (auto& [key, value] : params) {
    if (key.ends_with(".bias")) value = TensorD(value.shape);
  }
  const BackboneFeatures<double> f =
      backbone_forward(g, params, TensorD(Shape{1, 3, 64, 64}));
  for (double v : f.f2.data) CHECK(v == 0.0);
  for (double v : f.f5.data) CHECK(v == 0.0);
}

TEST_CASE("pyramid stride ladder and channel uniformity") {
  const AcfpnConfig cfg = tiny_config();
  const LayerGraph net = acfpn_build(cfg);
  const ParamDict<float> params = init_params<float>(net, 3);
  const TensorF image = oracle::random_tensor<float>(Shape{1, 3, 128, 128}, 4);
  const Pyramid<float> p = acfpn_forward(net, params, image);

  const std::int64_t lc = cfg.pyramid.lateral_channels;
  CHECK(p.p2.shape == Shape{1, lc, 32, 32});
  CHECK(p.p3.shape == Shape{1, lc, 16, 16});
  CHECK(p.p4.shape == Shape{1, lc, 8, 8});
  CHECK(p.p5.shape == Shape{1, lc, 4, 4});
  CHECK(p.p6.shape == Shape{1, lc, 2, 2});
}

TEST_CASE("nearest upsample of a 1x1 map is a constant 2x2 block") {
  TensorD x(Shape{1, 1, 1, 1}, {2.5});
  const TensorD up = nearest_upsample2x(x);
  CHECK(up.shape == Shape{1, 1, 2, 2});
  for (double v : up.data) CHECK(v == 2.5);
}

TEST_CASE("same seed twice is byte-identical, independent of thread count") {
  const AcfpnConfig cfg = tiny_config();
  const LayerGraph net = acfpn_build(cfg);
  const ParamDict<float> params = init_params<float>(net, 5);
  const TensorF image = oracle::random_tensor<float>(Shape{1, 3, 64, 64}, 6);

  set_num_threads(1);
  const Pyramid<float> a = acfpn_forward(net, params, image);
  set_num_threads(4);
  const Pyramid<float> b = acfpn_forward(net, params, image);
  set_num_threads(0);
  const Pyramid<float> c = acfpn_forward(net, params, image);

  for (int k = 2; k <= 6; ++k) {
    CAPTURE(k);
    CHECK(a.level(k).bit_equal(b.level(k)));
    CHECK(a.level(k).bit_equal(c.level(k)));
  }
}

TEST_CASE("zero attention weights reproduce the attention-free pyramid") {
  AcfpnConfig with_am = tiny_config();
  AcfpnConfig without_am = tiny_config();
  without_am.am.cxam = false;
  without_am.am.cnam = false;

  const LayerGraph net_am = acfpn_build(with_am);
  const LayerGraph net_plain = acfpn_build(without_am);

  // shared weights for the common nodes; attention projections zeroed
  ParamDict<double> params_am = init_params<double>(net_am, 7);
  ParamDict<double> params_plain;
  for (const auto& [key, value] : params_am) {
    const bool attention_param = key.starts_with("CxAM_") || key.starts_with("CnAM_");
    if (attention_param) {
      params_am[key] = TensorD(value.shape);
    } else {
      params_plain[key] = value;
    }
  }

  const TensorD image = oracle::random_tensor<double>(Shape{1, 3, 64, 64}, 8);
  const Pyramid<double> a = acfpn_forward(net_am, params_am, image);
  const Pyramid<double> b = acfpn_forward(net_plain, params_plain, image);
  for (int k = 2; k <= 6; ++k) {
    CAPTURE(k);
    CHECK(a.level(k).bit_equal(b.level(k)));
  }
}

TEST_CASE("zeroed lateral makes the level the smoothed upsampled coarser level") {
  AcfpnConfig cfg = tiny_config();
  const LayerGraph net = acfpn_build(cfg);
  ParamDict<double> params = init_params<double>(net, 9);
  params["lateral_c4.weight"] = TensorD(params.at("lateral_c4.weight").shape);
  params["lateral_c4.bias"] = TensorD(params.at("lateral_c4.bias").shape);

  const TensorD image = oracle::random_tensor<double>(Shape{1, 3, 64, 64}, 10);
  TensorMap<double> inputs;
  inputs["image"] = image;
  const TensorMap<double> acts = graph_forward(net, params, inputs);

  const TensorD want = conv2d(nearest_upsample2x(acts.at("AM_fuse")), params.at("p4.weight"),
                              params.at("p4.bias"), ConvSpec::make(3, 1, 1));
  CHECK(acts.at("p4").bit_equal(want));
}

TEST_CASE("pyramid_backward") {
  const AcfpnConfig cfg = AcfpnConfig{}.scaled(32);
  const LayerGraph net = acfpn_build(cfg);
  const ParamDict<double> params = init_params<double>(net, 11);
  const TensorD image = oracle::random_tensor<double>(Shape{1, 3, 32, 32}, 12);

  SUBCASE("zero upstream grads give zero parameter grads") {
    TensorMap<double> inputs;
    inputs["image"] = image;
    const TensorMap<double> acts = graph_forward(net, params, inputs);
    TensorMap<double> upstream;
    for (const char* level : kPyramidLevels) {
      upstream[level] = TensorD(acts.at(level).shape);
    }
    const GraphGrads<double> grads = pyramid_backward(net, params, image, upstream);
    for (const auto& [key, g] : grads.params) {
      CAPTURE(key);
      for (double v : g.data) CHECK(v == 0.0);
    }
  }

  SUBCASE("a perturbed parameter changes only downstream levels") {
    // p3's smoothing conv feeds only p3
    ParamDict<double> nudged = params;
    nudged.at("p3.weight").data[0] += 0.25;
    const Pyramid<double> base = acfpn_forward(net, params, image);
    const Pyramid<double> moved = acfpn_forward(net, nudged, image);
    CHECK_FALSE(base.p3.bit_equal(moved.p3));
    CHECK(base.p2.bit_equal(moved.p2));
    CHECK(base.p4.bit_equal(moved.p4));
    CHECK(base.p5.bit_equal(moved.p5));
    CHECK(base.p6.bit_equal(moved.p6));
  }
}
