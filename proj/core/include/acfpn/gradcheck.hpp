#pragma once

#include <functional>
#include <string>
#include <vector>

#include "acfpn/graph.hpp"
#include "acfpn/tensor.hpp"

namespace acfpn {

// Central-difference verification of the analytic backward passes. Checks
// run in double precision; the scalar loss is the plain sum of the op's
// outputs, so every output element sees a unit upstream gradient.

using CheckInputs = TensorMap<double>;

struct GradCheckOp {
  std::string name;
  /// Output tensor whose element sum is the checked loss.
  std::function<TensorD(const CheckInputs&)> forward;
  /// Analytic grads of the loss per input slot. Slots may be omitted when
  /// the gradient is identically zero.
  std::function<CheckInputs(const CheckInputs&)> backward;
};

struct GradCheckOutcome {
  double max_rel_err = 0.0;
  std::string worst_slot;
  std::int64_t worst_index = -1;
};

/// Relative error |a - b| / max(|a|, |b|, 1e-8).
double rel_error(double a, double b);

/// Perturbs input scalars by +-epsilon and compares the finite-difference
/// loss gradient against op.backward. epsilon must lie in [1e-7, 1e-4].
/// max_coords_per_tensor > 0 checks a deterministic sample of coordinates
/// per tensor instead of every scalar (used by the large end-to-end case).
GradCheckOutcome grad_check(const GradCheckOp& op, const CheckInputs& inputs, double epsilon,
                            int max_coords_per_tensor = -1);

/// Registry lookup for the named ops of the standard suite; throws for an
/// op without a registered backward.
double grad_check(const std::string& op_name, const CheckInputs& inputs, double epsilon);

struct GradCheckCase {
  GradCheckOp op;
  std::function<CheckInputs()> make_inputs;
  double tolerance = 1e-5;
  int max_coords_per_tensor = -1;
};

/// Every case of the standard suite: the primitive ops across their
/// stride/pad/dilation grid, the deformable convolution, both attention
/// paths, and a channel-reduced end-to-end network.
const std::vector<GradCheckCase>& gradcheck_suite_cases();

struct SuiteRow {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct SuiteReport {
  std::vector<SuiteRow> rows;
  bool all_pass = true;
};

/// Runs the whole suite. inject_fault names an op whose analytic gradient
/// is deliberately corrupted before comparison (test hook for the exit-code
/// contract); it must name a registered op.
SuiteReport run_gradcheck_suite(double epsilon = 1e-6, const std::string& inject_fault = {});

}  // namespace acfpn
