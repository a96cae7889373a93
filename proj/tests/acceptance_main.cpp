// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "acfpn/analysis.hpp"
#include "acfpn/attention.hpp"
#include "acfpn/cem.hpp"
#include "acfpn/deform_conv.hpp"
#include "acfpn/gradcheck.hpp"
#include "acfpn/io.hpp"
#include "acfpn/ops.hpp"
#include "acfpn/parallel.hpp"
#include "acfpn/pyramid.hpp"
#include "oracles.hpp"

using namespace acfpn;

namespace {

int g_failures = 0;

struct Criterion {
  int number;
  std::string title;
  double time_limit_s;
  std::function<void(std::ostringstream&)> body;  // throws or appends "FAIL:" details
};

void expect(std::ostringstream& log, bool ok, const std::string& what) {
  if (!ok) log << "  FAIL: " << what << "\n";
}

void run_criterion(const Criterion& c) {
  std::ostringstream log;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    c.body(log);
  } catch (const std::exception& e) {
    log << "  FAIL: exception: " << e.what() << "\n";
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (c.time_limit_s > 0 && elapsed > c.time_limit_s) {
    log << "  FAIL: took " << elapsed << "s, limit " << c.time_limit_s << "s\n";
  }
  const bool pass = log.str().empty();
  if (!pass) ++g_failures;
  std::printf("[%s] criterion %d: %s (%.2fs)\n", pass ? "PASS" : "FAIL", c.number,
              c.title.c_str(), elapsed);
  if (!pass) std::fputs(log.str().c_str(), stdout);
  std::fflush(stdout);
}

#ifdef ACFPN_CLI_PATH
int run_cli(const std::string& args, const std::string& log_path) {
  const std::string cmd = std::string(ACFPN_CLI_PATH) + " " + args + " > " + log_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status < 0) return -1;
#ifdef _WIN32
  return status;
#else
  return WEXITSTATUS(status);
#endif
}
#endif

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------

void criterion_shape_table(std::ostringstream& log) {
  const LayerGraph g = cem_build(CemConfig{});
  const ParamDict<float> params = init_params<float>(g, 1);
  TensorMap<float> inputs;
  inputs["f5"] = oracle::random_tensor<float>(Shape{1, 2048, 16, 16}, 2);
  const TensorMap<float> acts = graph_forward(g, params, inputs);

  struct Row {
    const char* name;
    std::int64_t in_c, out_c, out_hw;
  };
  const std::vector<Row> rows = {
      {"CEM_3_1x1", 2048, 512, 16},     {"CEM_3_3x3", 512, 256, 16},
      {"CEM_concat_1", 2048, 2304, 16}, {"CEM_6_1x1", 2304, 512, 16},
      {"CEM_6_3x3", 512, 256, 16},      {"CEM_concat_2", 2304, 2560, 16},
      {"CEM_12_1x1", 2560, 512, 16},    {"CEM_12_3x3", 512, 256, 16},
      {"CEM_concat_3", 2560, 2816, 16}, {"CEM_18_1x1", 2816, 512, 16},
      {"CEM_18_3x3", 512, 256, 16},     {"CEM_concat_4", 2816, 3072, 16},
      {"CEM_24_1x1", 3072, 512, 16},    {"CEM_24_3x3", 512, 256, 16},
      {"CEM_global_context", 2048, 2048, 1},
      {"CEM_gc_reduce_1x1", 2048, 256, 1},
      {"CEM_gc_upsample", 256, 256, 16},
      {"CEM_concat_5", 256, 1536, 16},  {"CEM_reduce_1x1", 1536, 256, 16},
  };
  for (const Row& row : rows) {
    if (!g.has_node(row.name)) {
      expect(log, false, std::string(row.name) + " missing from the graph");
      continue;
    }
    const LayerNode& node = g.node(row.name);
    const Shape in_shape = acts.at(node.inputs.at(0)).shape;
    const Shape out_shape = acts.at(row.name).shape;
    expect(log, in_shape.c == row.in_c,
           std::string(row.name) + " input width " + std::to_string(in_shape.c) +
               " != " + std::to_string(row.in_c));
    expect(log, out_shape.c == row.out_c && out_shape.h == row.out_hw &&
                    out_shape.w == row.out_hw,
           std::string(row.name) + " output " + out_shape.str());
  }
  expect(log, acts.at(g.outputs[0]).shape == Shape{1, 256, 16, 16},
         "final output shape " + acts.at(g.outputs[0]).shape.str());
}

void criterion_gradient_suite(std::ostringstream& log) {
  const SuiteReport report = run_gradcheck_suite(1e-6);
  for (const SuiteRow& row : report.rows) {
    expect(log, row.pass,
           row.name + " max_rel_err " + std::to_string(row.max_rel_err) + " > tolerance " +
               std::to_string(row.tolerance));
  }
}

void criterion_zero_offset(std::ostringstream& log) {
  std::mt19937_64 rng(97);
  for (int rep = 0; rep < 100; ++rep) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng() % 2);
    const std::int64_t ci = 1 + static_cast<std::int64_t>(rng() % 4);
    const std::int64_t co = 1 + static_cast<std::int64_t>(rng() % 4);
    const int kernel = 1 + 2 * static_cast<int>(rng() % 2);  // 1 or 3
    const int dil = 1 + static_cast<int>(rng() % 4);
    const int pad = kernel == 1 ? static_cast<int>(rng() % 2) : dil;
    const int stride = 1 + static_cast<int>(rng() % 2);
    const std::int64_t hw = 5 + static_cast<std::int64_t>(rng() % 5);
    const ConvSpec spec = ConvSpec::make(kernel, stride, pad, dil);
    if (spec.footprint_h() > hw + 2 * pad) continue;

    DeformConv2d<double> layer;
    layer.weight = oracle::random_tensor<double>(Shape{co, ci, kernel, kernel}, rng());
    layer.bias = oracle::random_tensor<double>(Shape{1, co, 1, 1}, rng());
    layer.offset_weight = TensorD(Shape{2LL * kernel * kernel, ci, kernel, kernel});
    layer.offset_bias = TensorD(Shape{1, 2LL * kernel * kernel, 1, 1});
    layer.spec = spec;
    const TensorD x = oracle::random_tensor<double>(Shape{n, ci, hw, hw}, rng());
    const double diff =
        oracle::max_abs_diff(deform_conv2d(x, layer), conv2d(x, layer.weight, layer.bias, spec));
    expect(log, diff <= 1e-12,
           "case " + std::to_string(rep) + " deviates by " + std::to_string(diff));
  }
}

void criterion_attention_invariants(std::ostringstream& log) {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 10; ++rep) {
    const TensorD f = oracle::random_tensor<double>(Shape{1, 8, 4, 4}, rng(), -3.0, 3.0);
    const TensorD f5 = oracle::random_tensor<double>(Shape{1, 12, 4, 4}, rng(), -3.0, 3.0);
    CxamWeights<double> cw;
    cw.wq = oracle::random_tensor<double>(Shape{4, 8, 1, 1}, rng());
    cw.bq = oracle::random_tensor<double>(Shape{1, 4, 1, 1}, rng());
    cw.wk = oracle::random_tensor<double>(Shape{4, 8, 1, 1}, rng());
    cw.bk = oracle::random_tensor<double>(Shape{1, 4, 1, 1}, rng());
    cw.wv = oracle::random_tensor<double>(Shape{8, 8, 1, 1}, rng());
    cw.bv = oracle::random_tensor<double>(Shape{1, 8, 1, 1}, rng());
    CnamWeights<double> nw;
    nw.wp = oracle::random_tensor<double>(Shape{6, 12, 1, 1}, rng());
    nw.bp = oracle::random_tensor<double>(Shape{1, 6, 1, 1}, rng());
    nw.wz = oracle::random_tensor<double>(Shape{6, 12, 1, 1}, rng());
    nw.bz = oracle::random_tensor<double>(Shape{1, 6, 1, 1}, rng());

    const CxamOutput<double> cx = cxam_forward(f, cw);
    const CnamOutput<double> cn = cnam_forward(f5, cx.v, nw);
    for (double v : cx.attn.data) expect(log, v > 0.0 && v < 1.0, "cxam attention out of (0,1)");
    for (double v : cn.attn.data) expect(log, v > 0.0 && v < 1.0, "cnam attention out of (0,1)");
    for (std::size_t i = 0; i < cx.e.data.size(); ++i) {
      expect(log, std::fabs(cx.e.data[i]) <= std::fabs(cx.v.data[i]), "|E| exceeds |V|");
      expect(log, std::fabs(cn.d.data[i]) <= std::fabs(cx.v.data[i]), "|D| exceeds |V|");
    }
  }

  // all projection and value weights/biases zero: fusion is the identity
  const TensorD f = oracle::random_tensor<double>(Shape{2, 6, 3, 3}, 17);
  const TensorD f5 = oracle::random_tensor<double>(Shape{2, 10, 3, 3}, 18);
  CxamWeights<double> cw;
  cw.wq = TensorD(Shape{3, 6, 1, 1});
  cw.bq = TensorD(Shape{1, 3, 1, 1});
  cw.wk = TensorD(Shape{3, 6, 1, 1});
  cw.bk = TensorD(Shape{1, 3, 1, 1});
  cw.wv = TensorD(Shape{6, 6, 1, 1});
  cw.bv = TensorD(Shape{1, 6, 1, 1});
  CnamWeights<double> nw;
  nw.wp = TensorD(Shape{3, 10, 1, 1});
  nw.bp = TensorD(Shape{1, 3, 1, 1});
  nw.wz = TensorD(Shape{3, 10, 1, 1});
  nw.bz = TensorD(Shape{1, 3, 1, 1});
  const CxamOutput<double> cx = cxam_forward(f, cw);
  const CnamOutput<double> cn = cnam_forward(f5, cx.v, nw);
  expect(log, am_fuse(f, cx.e, cn.d).bit_equal(f), "zero-weight fusion is not the identity");
}

void criterion_param_delta(std::ostringstream& log) {
  const std::int64_t total = count_params(cem_build(CemConfig{})) + count_params(cxam_build()) +
                             count_params(cnam_build());
  const double deviation = std::fabs(static_cast<double>(total) / 14.76e6 - 1.0);
  expect(log, deviation <= 0.10,
         "added parameters " + std::to_string(total) + " deviate " +
             std::to_string(deviation * 100.0) + "% from 14.76M");
}

void criterion_ablation_configs(std::ostringstream& log) {
  const std::vector<std::vector<int>> tabulated = {
      {1}, {3, 12, 24}, {3, 6, 12, 18, 24}, {3, 6, 9, 12, 18, 24, 32}};
  for (const auto& rates : tabulated) {
    CemConfig cfg;
    cfg.rates = rates;
    const LayerGraph g = cem_build(cfg);
    const auto plan = channel_plan(cfg);
    expect(log, plan.size() == rates.size(), "plan length mismatch");
    for (std::size_t k = 0; k < plan.size(); ++k) {
      expect(log, plan[k] == cfg.in_channels + static_cast<std::int64_t>(k) * cfg.path_channels,
             "dense width for path " + std::to_string(k));
      const LayerNode& node = g.node("CEM_" + std::to_string(rates[k]) + "_1x1");
      expect(log, node.in_channels == plan[k],
             "graph width for path " + std::to_string(k));
    }
  }
}

void criterion_pyramid_contract(std::ostringstream& log) {
  const AcfpnConfig cfg;  // full-width network
  const LayerGraph net = acfpn_build(cfg);
  const std::uint64_t seed = 11;
  const TensorF image = oracle::random_tensor<float>(Shape{1, 3, 128, 128}, seed);

  set_num_threads(0);
  const ParamDict<float> params_a = init_params<float>(net, seed);
  const Pyramid<float> a = acfpn_forward(net, params_a, image);

  const Shape expected[5] = {{1, 256, 32, 32},
                             {1, 256, 16, 16},
                             {1, 256, 8, 8},
                             {1, 256, 4, 4},
                             {1, 256, 2, 2}};
  for (int k = 2; k <= 6; ++k) {
    expect(log, a.level(k).shape == expected[k - 2],
           "p" + std::to_string(k) + " shape " + a.level(k).shape.str());
  }

  // same seed again
  const ParamDict<float> params_b = init_params<float>(net, seed);
  const Pyramid<float> b = acfpn_forward(net, params_b, image);
  // different thread count
  set_num_threads(3);
  const Pyramid<float> c = acfpn_forward(net, params_b, image);
  set_num_threads(0);
  for (int k = 2; k <= 6; ++k) {
    expect(log, a.level(k).bit_equal(b.level(k)),
           "p" + std::to_string(k) + " differs between same-seed runs");
    expect(log, a.level(k).bit_equal(c.level(k)),
           "p" + std::to_string(k) + " differs across thread counts");
  }
}

void criterion_receptive_field(std::ostringstream& log) {
  expect(log, cem_rf_growth(CemConfig{}) == 4032,
         "default stack growth " + std::to_string(cem_rf_growth(CemConfig{})));
  const ConvSpec single = ConvSpec::make(3, 1, 1);
  const RfSpec rf = receptive_field(std::span<const ConvSpec>(&single, 1));
  expect(log, rf.rf_h == 3 && rf.rf_w == 3, "3x3 layer rf");
  const ConvSpec dilated = ConvSpec::make(3, 1, 24, 24);
  RfSpec initial;
  initial.jump_h = initial.jump_w = 32;
  expect(log,
         receptive_field(std::span<const ConvSpec>(&dilated, 1), initial).rf_h - 1 == 1536,
         "dilated-24 layer growth");
}

void criterion_cli_round_trips(std::ostringstream& log) {
#ifndef ACFPN_CLI_PATH
  expect(log, false, "CLI binary path not configured");
#else
  namespace fs = std::filesystem;
  const fs::path work = fs::temp_directory_path() / "acfpn_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string cfg_path = (work / "run.cfg").string();
  {
    std::ofstream cfg(cfg_path);
    cfg << "seed = 5\ninput.height = 128\ninput.width = 128\noutput.dump_tensors = true\n";
  }
  const std::string log1 = (work / "cli1.log").string();
  const std::string log2 = (work / "cli2.log").string();

  // attention maps: two identical runs, files re-read to identical pixels
  const std::string dump_a = (work / "attn_a").string();
  const std::string dump_b = (work / "attn_b").string();
  int rc = run_cli("dump-attention --config " + cfg_path + " --out " + dump_a, log1);
  expect(log, rc == 0, "dump-attention exited " + std::to_string(rc));
  rc = run_cli("dump-attention --config " + cfg_path + " --out " + dump_b, log2);
  expect(log, rc == 0, "second dump-attention exited " + std::to_string(rc));
  for (const char* name : {"cxam_attn.pgm", "cnam_attn.pgm"}) {
    const std::string fa = dump_a + "/" + name;
    const std::string fb = dump_b + "/" + name;
    if (!fs::exists(fa) || !fs::exists(fb)) {
      expect(log, false, std::string(name) + " missing");
      continue;
    }
    const GrayImage ia = read_pgm(fa);
    const GrayImage ib = read_pgm(fb);
    expect(log, ia.width == 4 && ia.height == 4,
           std::string(name) + " is not the 4x4 stride-32 map");
    expect(log, ia.pixels == ib.pixels, std::string(name) + " pixels differ between runs");
    expect(log, read_bytes(fa) == read_bytes(fb), std::string(name) + " bytes differ");
  }

  // tensor dumps: bit-identical across runs and through the reader
  const std::string fwd_a = (work / "fwd_a").string();
  const std::string fwd_b = (work / "fwd_b").string();
  rc = run_cli("forward --config " + cfg_path + " --out " + fwd_a, log1);
  expect(log, rc == 0, "forward exited " + std::to_string(rc));
  rc = run_cli("forward --config " + cfg_path + " --out " + fwd_b, log2);
  expect(log, rc == 0, "second forward exited " + std::to_string(rc));
  for (const char* level : kPyramidLevels) {
    const std::string fa = fwd_a + "/" + std::string(level) + ".acft";
    const std::string fb = fwd_b + "/" + std::string(level) + ".acft";
    if (!fs::exists(fa) || !fs::exists(fb)) {
      expect(log, false, std::string(level) + ".acft missing");
      continue;
    }
    expect(log, read_acft(fa).bit_equal(read_acft(fb)),
           std::string(level) + ".acft not bit-identical across runs");
    expect(log, read_bytes(fa) == read_bytes(fb), std::string(level) + ".acft bytes differ");
  }
  const TensorF p2 = read_acft(fwd_a + "/p2.acft");
  expect(log, p2.shape == Shape{1, 256, 32, 32}, "dumped p2 has shape " + p2.shape.str());
  expect(log, read_bytes(fwd_a + "/summary.txt") == read_bytes(fwd_b + "/summary.txt"),
         "summaries differ between same-seed runs");

  // exit codes: clean suite passes, injected fault fails and names the op
  rc = run_cli("gradcheck", log1);
  expect(log, rc == 0, "stock gradcheck exited " + std::to_string(rc));
  rc = run_cli("gradcheck --inject-fault sigmoid", log2);
  expect(log, rc == 1, "fault-injected gradcheck exited " + std::to_string(rc));
  {
    std::ifstream in(log2);
    std::stringstream ss;
    ss << in.rdbuf();
    expect(log, ss.str().find("sigmoid") != std::string::npos,
           "fault report does not name the op");
  }
  rc = run_cli("gradcheck --precision f32", log1);
  expect(log, rc == 2, "single-precision gradcheck exited " + std::to_string(rc));
#endif
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "shape-table conformance of the default context module", 5.0, criterion_shape_table},
      {2, "gradient suite vs central finite differences", 300.0, criterion_gradient_suite},
      {3, "zero-offset deformable reduction over 100 random cases", 30.0,
       criterion_zero_offset},
      {4, "attention bounds and zero-weight identity fusion", 30.0,
       criterion_attention_invariants},
      {5, "added-parameter total within 10% of the 14.76M reference", 1.0,
       criterion_param_delta},
      {6, "tabulated path/rate ablations and dense-width formula", 10.0,
       criterion_ablation_configs},
      {7, "pyramid strides, channels and byte-level determinism", 10.0,
       criterion_pyramid_contract},
      {8, "receptive-field recurrence", 1.0, criterion_receptive_field},
      {9, "CLI round trips and gradcheck exit codes", 0.0, criterion_cli_round_trips},
  };
  for (const Criterion& c : criteria) run_criterion(c);
  if (g_failures == 0) {
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
  }
  std::printf("%d criteria failed\n", g_failures);
  return 1;
}
