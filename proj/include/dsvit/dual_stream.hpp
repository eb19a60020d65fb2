#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsvit/encoder.hpp"
#include "dsvit/model.hpp"
#include "dsvit/params.hpp"
#include "dsvit/tensor.hpp"

namespace dsvit {

struct DualStreamConfig {
  /// Backbone stages whose final-layer attention maps are aligned; subset of {3, 4}.
  std::vector<int> alignment_stages{3};
  double rgb_weight = 1.0;
  double optical_weight = 1.0;
  double attention_weight = 1.0;
  /// Treat motion attention as a constant target in the alignment term.
  bool stop_motion_gradient = false;

  void validate() const;
};

/// Per-step loss components. total_loss = rgb_loss + optical_loss + attention_loss.
struct LossRecord {
  std::size_t step = 0;
  double attention_loss = 0.0;
  double optical_loss = 0.0;
  double rgb_loss = 0.0;
  double total_loss = 0.0;
};

/// Two architecture-identical streams with independent parameters.
class DualStreamModel {
 public:
  DualStreamModel(const ModelConfig& model, const DualStreamConfig& dual, std::uint64_t seed);

  MshvitStream& rgb() { return rgb_; }
  MshvitStream& motion() { return motion_; }
  const MshvitStream& rgb() const { return rgb_; }
  const MshvitStream& motion() const { return motion_; }

  const ModelConfig& model_config() const { return rgb_.config(); }
  const DualStreamConfig& dual_config() const { return dual_; }
  DualStreamConfig& dual_config() { return dual_; }

  double alpha() const { return alpha_; }
  void set_alpha(double alpha);

  /// Visits "rgb.*" then "motion.*".
  void visit_parameters(const ParamVisitor& visit);
  std::vector<Tensor> parameters();

  /// Sigmoid scores of the RGB stream; the motion stream is not evaluated.
  std::vector<double> infer_rgb(const Tensor& image) const;
  std::vector<double> infer_motion(const Tensor& image) const;

 private:
  DualStreamConfig dual_;
  MshvitStream rgb_;
  MshvitStream motion_;
  double alpha_ = 0.5;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean over classes of -[y log p + (1-y) log(1-p)], p clamped to [1e-7, 1-1e-7].
Tensor bce_loss(const Tensor& probabilities, const Tensor& labels);

/// Mean squared difference of head-averaged attention maps, averaged over the
/// paired maps. Zero (and graph-free) for an empty set.
Tensor attention_alignment_loss(const std::vector<AttentionMap>& rgb,
                                const std::vector<AttentionMap>& motion);

struct LossTerms {
  Tensor total;
  Tensor rgb;
  Tensor optical;
  Tensor attention;
  LossRecord record;
  std::vector<double> rgb_scores;
  std::vector<double> motion_scores;
};

/// L = L_r(ŷ_r, y) + L_o(ŷ_o, y) + L_a over the configured alignment stages.
LossTerms total_loss(const DualStreamModel& model, const Tensor& rgb_image,
                     const Tensor& motion_image, const Tensor& labels);

/// α·ŷ_r + (1-α)·ŷ_o elementwise.
std::vector<double> fuse_predictions(std::span<const double> rgb, std::span<const double> motion,
                                     double alpha);

/// Projected subgradient step: clamp(α - lr·grad, 0, 1).
double update_alpha(double alpha, double grad, double lr);

/// d/dα of the mean clamped BCE of the fused scores. Zero where the clamp is active.
double alpha_subgradient(std::span<const double> rgb, std::span<const double> motion,
                         std::span<const double> labels, double alpha);

struct Sample {
  Tensor rgb;     // C×H×W in [0, 1]
  Tensor motion;  // C×H×W in [0, 1]
  Tensor labels;  // num_classes, entries 0/1
};

struct SgdOptimizer {
  double lr = 0.05;
  /// Step size for the fusion weight; zero keeps α fixed.
  double alpha_lr = 0.0;
};

/// One SGD update on both streams using the gradient of the batch-mean total
/// loss. Returns the batch-averaged record. Throws DivergenceError on a
/// non-finite loss.
LossRecord train_step(DualStreamModel& model, std::span<const Sample> batch,
                      const SgdOptimizer& optimizer, std::size_t step);

}  // namespace dsvit
