#pragma once

#include <cstdint>
#include <string>

#include "acfpn/pyramid.hpp"

namespace acfpn {

enum class Precision { kSingle, kDouble };

enum class InputKind { kSynthetic, kImage };
enum class InputDistribution { kNormal, kUniform };

/// Fully-defaulted run description parsed from a flat key-value file with
/// dotted section prefixes (e.g. `cem.rates = 3,6,12,18,24`). Unknown keys
/// are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  Precision precision = Precision::kSingle;

  CemConfig cem;
  AmConfig am;

  InputKind input_kind = InputKind::kSynthetic;
  std::string input_path;  // image input
  std::int64_t input_batch = 1;
  std::int64_t input_height = 128;
  std::int64_t input_width = 128;
  InputDistribution input_distribution = InputDistribution::kNormal;

  std::string output_dir = "out";
  bool dump_tensors = false;

  void validate() const;
  AcfpnConfig network() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

Precision parse_precision(const std::string& text);  // "f32" | "f64"
const char* precision_name(Precision p);

}  // namespace acfpn
