#include <doctest.h>

#include <string>
#include <vector>

#include "acfpn/cem.hpp"
#include "acfpn/ops.hpp"
#include "oracles.hpp"

using namespace acfpn;

TEST_CASE("channel_plan") {
  CemConfig cfg;
  SUBCASE("default dense widths") {
    CHECK(channel_plan(cfg) == std::vector<std::int64_t>{2048, 2304, 2560, 2816, 3072});
  }
  SUBCASE("non-dense keeps the input width") {
    cfg.use_dense = false;
    CHECK(channel_plan(cfg) == std::vector<std::int64_t>{2048, 2048, 2048, 2048, 2048});
  }
  SUBCASE("three paths") {
    cfg.rates = {3, 12, 24};
    CHECK(channel_plan(cfg) == std::vector<std::int64_t>{2048, 2304, 2560});
  }
  SUBCASE("dense width formula holds over random configs") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 20; ++rep) {
      CemConfig c;
      c.rates.clear();
      const int paths = 1 + static_cast<int>(rng() % 7);
      for (int i = 0; i < paths; ++i) c.rates.push_back(1 + 3 * i + static_cast<int>(rng() % 3));
      c.in_channels = 8 + static_cast<std::int64_t>(rng() % 64);
      c.path_channels = 1 + static_cast<std::int64_t>(rng() % 32);
      const auto plan = channel_plan(c);
      for (std::size_t k = 0; k < plan.size(); ++k) {
        CHECK(plan[k] == c.in_channels + static_cast<std::int64_t>(k) * c.path_channels);
      }
    }
  }
}

TEST_CASE("cem config validation") {
  CemConfig cfg;
  cfg.rates = {};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.rates = {3, 3};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.rates = {0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

namespace {

struct GoldenRow {
  const char* name;
  OpKind kind;
  std::int64_t in_c;   // channel width of the first input
  std::int64_t out_c;  // output channels
  std::int64_t out_hw; // output spatial extent (square)
};

}  // namespace

TEST_CASE("default graph matches the layer table row for row") {
  const LayerGraph g = cem_build(CemConfig{});
  const auto shapes = infer_shapes(g, {{"f5", Shape{1, 2048, 16, 16}}});

  const std::vector<GoldenRow> golden = {
      {"CEM_3_1x1", OpKind::kConv, 2048, 512, 16},
      {"CEM_3_3x3", OpKind::kDeformConv, 512, 256, 16},
      {"CEM_concat_1", OpKind::kConcat, 2048, 2304, 16},
      {"CEM_6_1x1", OpKind::kConv, 2304, 512, 16},
      {"CEM_6_3x3", OpKind::kDeformConv, 512, 256, 16},
      {"CEM_concat_2", OpKind::kConcat, 2304, 2560, 16},
      {"CEM_12_1x1", OpKind::kConv, 2560, 512, 16},
      {"CEM_12_3x3", OpKind::kDeformConv, 512, 256, 16},
      {"CEM_concat_3", OpKind::kConcat, 2560, 2816, 16},
      {"CEM_18_1x1", OpKind::kConv, 2816, 512, 16},
      {"CEM_18_3x3", OpKind::kDeformConv, 512, 256, 16},
      {"CEM_concat_4", OpKind::kConcat, 2816, 3072, 16},
      {"CEM_24_1x1", OpKind::kConv, 3072, 512, 16},
      {"CEM_24_3x3", OpKind::kDeformConv, 512, 256, 16},
      {"CEM_global_context", OpKind::kGlobalAvgPool, 2048, 2048, 1},
      {"CEM_gc_reduce_1x1", OpKind::kConv, 2048, 256, 1},
      {"CEM_gc_upsample", OpKind::kBilinearResizeLike, 256, 256, 16},
      {"CEM_concat_5", OpKind::kConcat, 256, 1536, 16},
      {"CEM_reduce_1x1", OpKind::kConv, 1536, 256, 16},
  };

  for (const GoldenRow& row : golden) {
    CAPTURE(row.name);
    REQUIRE(g.has_node(row.name));
    const LayerNode& node = g.node(row.name);
    CHECK(node.kind == row.kind);
    CHECK(shapes.at(node.inputs.at(0)).c == row.in_c);
    const Shape& out = shapes.at(row.name);
    CHECK(out.c == row.out_c);
    CHECK(out.h == row.out_hw);
    CHECK(out.w == row.out_hw);
  }
  // dilation rates drive the 3x3 geometry: padding equals the rate
  for (int rate : {3, 6, 12, 18, 24}) {
    const LayerNode& node = g.node("CEM_" + std::to_string(rate) + "_3x3");
    CHECK(node.spec.dh == rate);
    CHECK(node.spec.ph == rate);
    CHECK(node.spec.kh == 3);
  }
}

TEST_CASE("ablation path/rate configurations build") {
  const std::vector<std::vector<int>> tabulated = {
      {1}, {3, 12, 24}, {3, 6, 12, 18, 24}, {3, 6, 9, 12, 18, 24, 32}};
  for (const auto& rates : tabulated) {
    CemConfig cfg;
    cfg.rates = rates;
    const LayerGraph g = cem_build(cfg);
    CHECK(g.outputs.size() == 1);
    const auto shapes = infer_shapes(g, {{"f5", Shape{1, 2048, 8, 8}}});
    CHECK(shapes.at(g.outputs[0]) == Shape{1, 256, 8, 8});
    const auto plan = channel_plan(cfg);
    for (std::size_t k = 0; k < rates.size(); ++k) {
      const LayerNode& reduce = g.node("CEM_" + std::to_string(rates[k]) + "_1x1");
      CHECK(reduce.in_channels == plan[k]);
    }
  }
}

TEST_CASE("single-path non-deformable ablation degenerates to a conv chain") {
  CemConfig cfg;
  cfg.rates = {1};
  cfg.use_dense = false;
  cfg.use_deformable = false;
  const LayerGraph g = cem_build(cfg);
  CHECK(g.node("CEM_1_3x3").kind == OpKind::kConv);
  // 1x1 -> 3x3 -> concat with gc -> 1x1
  CHECK(g.node("CEM_concat_1").inputs ==
        std::vector<std::string>{"CEM_1_3x3", "CEM_gc_upsample"});
  CHECK(g.node("CEM_reduce_1x1").in_channels == 512);
}

TEST_CASE("cem_forward") {
  CemConfig small = CemConfig{}.scaled(32);  // in 64, mid 16, path 8, out 8
  const LayerGraph g = cem_build(small);

  SUBCASE("preserves the spatial extent") {
    const ParamDict<float> params = init_params<float>(g, 11);
    const TensorF f5 = oracle::random_tensor<float>(Shape{1, 64, 6, 6}, 3);
    const TensorF out = cem_forward(g, params, f5);
    CHECK(out.shape == Shape{1, 8, 6, 6});
  }

  SUBCASE("rejects a channel mismatch") {
    const ParamDict<float> params = init_params<float>(g, 11);
    const TensorF bad = oracle::random_tensor<float>(Shape{1, 32, 6, 6}, 3);
    CHECK_THROWS_AS(cem_forward(g, params, bad), std::invalid_argument);
  }

  SUBCASE("zero weights and biases give zero output") {
    ParamDict<double> params = init_params<double>(g, 11);
    for (auto& [key, value] : params) value = TensorD(value.shape);
    const TensorD f5 = oracle::random_tensor<double>(Shape{1, 64, 4, 4}, 4);
    const TensorD out = cem_forward(g, params, f5);
    for (double v : out.data) CHECK(v == 0.0);
  }

  SUBCASE("single-path rate-1 chain equals hand-composed ops") {
    CemConfig cfg = small;
    cfg.rates = {1};
    cfg.use_dense = false;
    cfg.use_deformable = false;
    const LayerGraph chain = cem_build(cfg);
    const ParamDict<double> params = init_params<double>(chain, 23);
    const TensorD f5 = oracle::random_tensor<double>(Shape{2, 64, 5, 5}, 8);

    const TensorD got = cem_forward(chain, params, f5);

    const ConvSpec one = ConvSpec::make(1);
    const TensorD reduced = relu(
        conv2d(f5, params.at("CEM_1_1x1.weight"), params.at("CEM_1_1x1.bias"), one));
    const TensorD path =
        relu(conv2d(reduced, params.at("CEM_1_3x3.weight"), params.at("CEM_1_3x3.bias"),
                    ConvSpec::make(3, 1, 1, 1)));
    const TensorD gc = relu(conv2d(global_avg_pool(f5), params.at("CEM_gc_reduce_1x1.weight"),
                                   params.at("CEM_gc_reduce_1x1.bias"), one));
    const TensorD gc_up = bilinear_resize(gc, 5, 5);
    const TensorD cat = concat_channels<double>({&path, &gc_up});
    const TensorD want = relu(
        conv2d(cat, params.at("CEM_reduce_1x1.weight"), params.at("CEM_reduce_1x1.bias"), one));
    CHECK(got.bit_equal(want));
  }
}

TEST_CASE("spatial preservation across rates") {
  CemConfig cfg = CemConfig{}.scaled(64);
  cfg.rates = {2, 5, 9};
  const LayerGraph g = cem_build(cfg);
  const auto shapes = infer_shapes(g, {{"f5", Shape{1, cfg.in_channels, 11, 13}}});
  for (const LayerNode& node : g.nodes) {
    if (node.name == "CEM_global_context" || node.name == "CEM_gc_reduce_1x1") continue;
    CHECK(shapes.at(node.name).h == 11);
    CHECK(shapes.at(node.name).w == 13);
  }
}
