#pragma once

#include <array>
#include <cstddef>
#include <map>

#include "dsvit/params.hpp"
#include "dsvit/random.hpp"
#include "dsvit/tensor.hpp"

namespace dsvit {

inline constexpr int kNumStages = 4;

struct BackboneConfig {
  std::array<std::size_t, kNumStages> channels{8, 16, 32, 64};
  std::size_t kernel = 3;
  std::size_t pool = 2;
  std::size_t in_channels = 3;
  std::size_t height = 64;
  std::size_t width = 64;

  void validate() const;
  /// Spatial size of the pre-pool map of `stage` (1-based).
  std::size_t stage_height(int stage) const;
  std::size_t stage_width(int stage) const;
  std::size_t stage_channels(int stage) const { return channels.at(stage - 1); }
};

/// Pre-pool maps of stages 3 and 4 plus the post-pool output of stage 4.
struct FeaturePyramid {
  std::map<int, Tensor> taps;
  Tensor final;
};

/// Four stages of conv(p×p, same padding) → relu → max-pool.
class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, Rng& rng);

  FeaturePyramid forward(const Tensor& image) const;

  void visit_parameters(const std::string& prefix, const ParamVisitor& visit);
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  std::array<Tensor, kNumStages> kernels_;
  std::array<Tensor, kNumStages> biases_;  // shape [C', 1, 1]
};

}  // namespace dsvit
