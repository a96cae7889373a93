#include "acfpn/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace acfpn {

namespace {

[[noreturn]] void config_error(std::size_t line, const std::string& what) {
  throw std::invalid_argument("config line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v, std::size_t line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  config_error(line, "expected a boolean, got '" + v + "'");
}

std::int64_t parse_int(const std::string& v, std::size_t line) {
  try {
    std::size_t used = 0;
    const std::int64_t out = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::logic_error&) {
    config_error(line, "expected an integer, got '" + v + "'");
  }
}

std::vector<int> parse_int_list(const std::string& v, std::size_t line) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) config_error(line, "empty entry in list '" + v + "'");
    out.push_back(static_cast<int>(parse_int(item, line)));
  }
  if (out.empty()) config_error(line, "expected a non-empty list");
  return out;
}

}  // namespace

Precision parse_precision(const std::string& text) {
  if (text == "f32" || text == "single") return Precision::kSingle;
  if (text == "f64" || text == "double") return Precision::kDouble;
  throw std::invalid_argument("precision must be f32 or f64, got '" + text + "'");
}

const char* precision_name(Precision p) {
  return p == Precision::kSingle ? "f32" : "f64";
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_error(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) config_error(line_no, "empty key");
    if (value.empty()) config_error(line_no, "empty value for '" + key + "'");

    if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(value, line_no));
    } else if (key == "precision") {
      try {
        cfg.precision = parse_precision(value);
      } catch (const std::invalid_argument& e) {
        config_error(line_no, e.what());
      }
    } else if (key == "cem.rates") {
      cfg.cem.rates = parse_int_list(value, line_no);
    } else if (key == "cem.in_channels") {
      cfg.cem.in_channels = parse_int(value, line_no);
    } else if (key == "cem.mid_channels") {
      cfg.cem.mid_channels = parse_int(value, line_no);
    } else if (key == "cem.path_channels") {
      cfg.cem.path_channels = parse_int(value, line_no);
    } else if (key == "cem.out_channels") {
      cfg.cem.out_channels = parse_int(value, line_no);
    } else if (key == "cem.use_deformable") {
      cfg.cem.use_deformable = parse_bool(value, line_no);
    } else if (key == "cem.use_dense") {
      cfg.cem.use_dense = parse_bool(value, line_no);
    } else if (key == "am.cxam") {
      cfg.am.cxam = parse_bool(value, line_no);
    } else if (key == "am.cnam") {
      cfg.am.cnam = parse_bool(value, line_no);
    } else if (key == "am.cxam_channels") {
      cfg.am.cxam_channels = parse_int(value, line_no);
    } else if (key == "am.cnam_channels") {
      cfg.am.cnam_channels = parse_int(value, line_no);
    } else if (key == "input.kind") {
      if (value == "synthetic") {
        cfg.input_kind = InputKind::kSynthetic;
      } else if (value == "image") {
        cfg.input_kind = InputKind::kImage;
      } else {
        config_error(line_no, "input.kind must be synthetic or image");
      }
    } else if (key == "input.path") {
      cfg.input_path = value;
    } else if (key == "input.batch") {
      cfg.input_batch = parse_int(value, line_no);
    } else if (key == "input.height") {
      cfg.input_height = parse_int(value, line_no);
    } else if (key == "input.width") {
      cfg.input_width = parse_int(value, line_no);
    } else if (key == "input.distribution") {
      if (value == "normal") {
        cfg.input_distribution = InputDistribution::kNormal;
      } else if (value == "uniform") {
        cfg.input_distribution = InputDistribution::kUniform;
      } else {
        config_error(line_no, "input.distribution must be normal or uniform");
      }
    } else if (key == "output.dir") {
      cfg.output_dir = value;
    } else if (key == "output.dump_tensors") {
      cfg.dump_tensors = parse_bool(value, line_no);
    } else {
      config_error(line_no, "unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

void RunConfig::validate() const {
  cem.validate();
  if (input_kind == InputKind::kImage && input_path.empty()) {
    throw std::invalid_argument("config: input.kind = image requires input.path");
  }
  if (input_batch < 1) throw std::invalid_argument("config: input.batch must be positive");
  if (input_height < 32 || input_width < 32 || input_height % 32 != 0 || input_width % 32 != 0) {
    throw std::invalid_argument("config: input size must be a positive multiple of 32");
  }
  if (output_dir.empty()) throw std::invalid_argument("config: output.dir must be non-empty");
}

AcfpnConfig RunConfig::network() const {
  AcfpnConfig net;
  net.cem = cem;
  net.am = am;
  net.backbone.stage_channels[3] = cem.in_channels;
  net.pyramid.lateral_channels = cem.out_channels;
  return net;
}

}  // namespace acfpn
