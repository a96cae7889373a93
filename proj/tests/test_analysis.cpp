#include <doctest.h>

#include <cmath>
#include <random>

#include "acfpn/analysis.hpp"
#include "acfpn/attention.hpp"

using namespace acfpn;

TEST_CASE("count_params on single nodes") {
  SUBCASE("the 2048 -> 512 reduce holds 1,049,088 parameters") {
    LayerGraph g;
    add_input(g, "x", 2048);
    add_conv(g, "reduce", "x", 2048, 512, ConvSpec::make(1));
    g.outputs = {"reduce"};
    CHECK(count_params(g) == 1'049'088);
  }
  SUBCASE("a bias-free 1 -> 1 identity conv is a single parameter") {
    LayerGraph g;
    add_input(g, "x", 1);
    add_conv(g, "id", "x", 1, 1, ConvSpec::make(1), false, /*bias=*/false);
    g.outputs = {"id"};
    CHECK(count_params(g) == 1);
  }
  SUBCASE("deformable nodes include the offset branch") {
    LayerGraph g;
    add_input(g, "x", 8);
    add_deform_conv(g, "d", "x", 8, 4, ConvSpec::make(3, 1, 1));
    g.outputs = {"d"};
    // main 4*8*9 + 4, offsets 18*8*9 + 18
    CHECK(count_params(g) == 4 * 8 * 9 + 4 + 18 * 8 * 9 + 18);
  }
}

TEST_CASE("default context + attention parameters sit near the published delta") {
  const std::int64_t total = count_params(cem_build(CemConfig{})) + count_params(cxam_build()) +
                             count_params(cnam_build());
  CHECK(total == 14'969'178);
  const double deviation = std::fabs(static_cast<double>(total) / 14.76e6 - 1.0);
  CHECK(deviation < 0.10);
}

TEST_CASE("count_macs") {
  SUBCASE("1x1 conv 2048 -> 512 on 16x16") {
    LayerGraph g;
    add_input(g, "x", 2048);
    add_conv(g, "reduce", "x", 2048, 512, ConvSpec::make(1));
    g.outputs = {"reduce"};
    const ComplexityReport r = complexity_report(g, 16, 16);
    CHECK(r.nodes.back().macs == 268'435'456);
  }
  SUBCASE("zero-sized spatial input counts zero") {
    LayerGraph g;
    add_input(g, "x", 4);
    add_conv(g, "c", "x", 4, 4, ConvSpec::make(1));
    g.outputs = {"c"};
    CHECK(count_macs(g, 0, 0) == 0);
  }
  SUBCASE("hand-built two-node graph equals the hand-summed count") {
    LayerGraph g;
    add_input(g, "x", 3);
    add_conv(g, "a", "x", 3, 5, ConvSpec::make(3, 1, 1));
    add_conv(g, "b", "a", 5, 2, ConvSpec::make(1));
    g.outputs = {"b"};
    const std::int64_t want = 5 * 3 * 9 * 6 * 6 + 2 * 5 * 6 * 6;
    CHECK(count_macs(g, 6, 6) == want);
  }
  SUBCASE("affinity nodes count c' * N^2") {
    LayerGraph g;
    add_input(g, "q", 32);
    add_input(g, "k", 32);
    add_affinity(g, "r", "q", "k");
    g.outputs = {"r"};
    CHECK(count_macs(g, 4, 4) == 32 * 16 * 16);
  }
  SUBCASE("macs scale linearly with the spatial extent for conv graphs") {
    LayerGraph g;
    add_input(g, "x", 3);
    add_conv(g, "a", "x", 3, 8, ConvSpec::make(3, 1, 1));
    add_conv(g, "b", "a", 8, 8, ConvSpec::make(3, 1, 2, 2));
    g.outputs = {"b"};
    CHECK(count_macs(g, 16, 16) == 4 * count_macs(g, 8, 8));
  }
  SUBCASE("params do not depend on the input size") {
    const LayerGraph g = cem_build(CemConfig{}.scaled(8));
    CHECK(complexity_report(g, 4, 4).total_params ==
          complexity_report(g, 32, 32).total_params);
  }
}

TEST_CASE("fewer paths mean strictly fewer parameters") {
  CemConfig single;
  single.rates = {1};
  CHECK(count_params(cem_build(single)) < count_params(cem_build(CemConfig{})));
}

TEST_CASE("dense vs non-dense parameter difference has a closed form") {
  CemConfig dense;
  CemConfig flat;
  flat.use_dense = false;
  const std::int64_t diff =
      count_params(cem_build(dense)) - count_params(cem_build(flat));
  const auto plan_dense = channel_plan(dense);
  const auto plan_flat = channel_plan(flat);
  std::int64_t want = 0;
  for (std::size_t k = 0; k < plan_dense.size(); ++k) {
    want += (plan_dense[k] - plan_flat[k]) * dense.mid_channels;
  }
  CHECK(diff == want);
}

TEST_CASE("receptive field arithmetic") {
  SUBCASE("single 3x3 stride-1 dilation-1 layer sees 3 pixels") {
    const ConvSpec s = ConvSpec::make(3, 1, 1);
    const RfSpec rf = receptive_field(std::span<const ConvSpec>(&s, 1));
    CHECK(rf.rf_h == 3);
    CHECK(rf.rf_w == 3);
    CHECK(rf.jump_h == 1);
  }
  SUBCASE("3x3 dilation 24 on a stride-32 map adds 1536 pixels") {
    const ConvSpec s = ConvSpec::make(3, 1, 24, 24);
    RfSpec initial;
    initial.jump_h = initial.jump_w = 32;
    const RfSpec rf = receptive_field(std::span<const ConvSpec>(&s, 1), initial);
    CHECK(rf.rf_h - 1 == 1536);
  }
  SUBCASE("stride compounds the jump") {
    const std::vector<ConvSpec> chain = {ConvSpec::make(3, 2, 1), ConvSpec::make(3, 2, 1)};
    const RfSpec rf = receptive_field(chain);
    CHECK(rf.jump_h == 4);
    CHECK(rf.rf_h == 3 + 2 * 2);  // 3, then (3-1)*1*2 more
  }
  SUBCASE("default dense path stack grows by 4032 pixels") {
    CHECK(cem_rf_growth(CemConfig{}) == 4032);
    CHECK(cem_rf_growth(CemConfig{}) == 2 * (3 + 6 + 12 + 18 + 24) * 32);
  }
  SUBCASE("appending layers never shrinks the receptive field") {
    std::vector<ConvSpec> chain;
    RfSpec prev;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 12; ++i) {
      chain.push_back(ConvSpec::make(1 + static_cast<int>(rng() % 4),
                                     1 + static_cast<int>(rng() % 2),
                                     static_cast<int>(rng() % 3),
                                     1 + static_cast<int>(rng() % 5)));
      const RfSpec rf = receptive_field(chain);
      CHECK(rf.rf_h >= prev.rf_h);
      CHECK(rf.rf_w >= prev.rf_w);
      prev = rf;
    }
  }
}
