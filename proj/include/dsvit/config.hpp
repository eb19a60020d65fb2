#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dsvit/dual_stream.hpp"
#include "dsvit/model.hpp"

namespace dsvit {

enum class AlphaMode { fixed0, fixed_half, fixed1, learned };

AlphaMode parse_alpha_mode(const std::string& text);
std::string to_string(AlphaMode mode);
/// Fixed value of a non-learned mode; 0.5 (the starting point) for learned.
double initial_alpha(AlphaMode mode);

struct DataConfig {
  std::string root = "data";
  std::size_t train = 2000;
  std::size_t val = 500;
  /// Image size; also the backbone input size.
  std::size_t height = 64;
  std::size_t width = 64;
  double max_displacement = 8.0;
  /// Per-class label frequencies, in DE, FS, AF, GR, OK order.
  std::array<double, 5> class_rates{0.25, 0.20, 0.25, 0.20, 0.15};
  std::size_t max_glyphs = 3;
};

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  double lr = 0.05;
  double alpha_lr = 0.01;
  std::uint64_t seed = 42;
};

struct EvalConfig {
  /// `class,weight` CSV; empty means uniform weights.
  std::string weights;
  double threshold = 0.5;
};

struct RunConfig {
  ModelConfig model;
  DualStreamConfig dual;
  DataConfig data;
  TrainConfig train;
  EvalConfig eval;
  AlphaMode alpha_mode = AlphaMode::learned;

  void validate() const;
  /// Every key in parseable form; parse_run_config(to_text()) round-trips.
  std::string to_text() const;
};

/// Flat `key=value` lines with dotted section prefixes; `#` starts a comment.
/// Starts from the defaults. Errors name the source, line and key.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);

/// Applies one `key=value` assignment.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

std::vector<int> parse_alignment_stages(const std::string& text);
std::string format_alignment_stages(const std::vector<int>& stages);

}  // namespace dsvit
