#include <doctest.h>

#include "acfpn/gradcheck.hpp"
#include "acfpn/ops.hpp"
#include "oracles.hpp"

using namespace acfpn;

namespace {

const GradCheckCase& case_named(const std::string& name) {
  for (const GradCheckCase& c : gradcheck_suite_cases()) {
    if (c.op.name == name) return c;
  }
  throw std::runtime_error("missing case " + name);
}

}  // namespace

TEST_CASE("grad_check rejects bad epsilon and unknown ops") {
  const GradCheckCase& c = case_named("sigmoid");
  CHECK_THROWS_AS(grad_check(c.op, c.make_inputs(), 1e-2), std::invalid_argument);
  CHECK_THROWS_AS(grad_check(c.op, c.make_inputs(), 1e-9), std::invalid_argument);
  CHECK_THROWS_WITH_AS(grad_check("not_an_op", c.make_inputs(), 1e-6),
                       doctest::Contains("no registered backward"), std::invalid_argument);
}

TEST_CASE("linear op error sits at machine-noise scale") {
  const GradCheckCase& c = case_named("concat_channels");
  // wide epsilon keeps the cancellation noise of the linear loss tiny
  const GradCheckOutcome out = grad_check(c.op, c.make_inputs(), 1e-4);
  CHECK(out.max_rel_err <= 1e-10);
}

TEST_CASE("sigmoid finite differences") {
  const GradCheckCase& c = case_named("sigmoid");
  CHECK(grad_check(c.op, c.make_inputs(), 1e-6, -1).max_rel_err <= 1e-6);
}

TEST_CASE("dilated conv finite differences") {
  const GradCheckCase& c = case_named("conv2d[k3 s1 p2 d2]");
  CHECK(grad_check(c.op, c.make_inputs(), 1e-6, -1).max_rel_err <= 1e-5);

  // registered ops also accept caller-provided inputs
  CheckInputs in;
  in["input"] = oracle::random_tensor<double>({1, 3, 6, 6}, 91, 0.1, 1.0);
  in["weight"] = oracle::random_tensor<double>({4, 3, 3, 3}, 92, 0.1, 0.6);
  in["bias"] = oracle::random_tensor<double>({1, 4, 1, 1}, 93, 0.1, 0.5);
  CHECK(grad_check("conv2d[k3 s1 p0 d2]", in, 1e-6) <= 1e-5);
}

TEST_CASE("attention path finite differences") {
  CHECK(grad_check(case_named("cxam_path").op, case_named("cxam_path").make_inputs(), 1e-6)
            .max_rel_err <= 1e-5);
  CHECK(grad_check(case_named("cnam_path").op, case_named("cnam_path").make_inputs(), 1e-6)
            .max_rel_err <= 1e-5);
}

TEST_CASE("fault injection is detected and named") {
  SuiteReport report = run_gradcheck_suite(1e-6, "attn_collapse");
  CHECK_FALSE(report.all_pass);
  bool named = false;
  for (const SuiteRow& row : report.rows) {
    if (row.name == "attn_collapse") {
      named = true;
      CHECK_FALSE(row.pass);
    } else {
      CHECK(row.pass);
    }
  }
  CHECK(named);
  CHECK_THROWS_AS(run_gradcheck_suite(1e-6, "bogus_op"), std::invalid_argument);
}
