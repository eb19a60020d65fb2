#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsvit/config.hpp"
#include "dsvit/dual_stream.hpp"
#include "dsvit/metrics.hpp"

namespace dsvit {

/// Sample order of one epoch: a seeded Fisher-Yates shuffle.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

using StepCallback = std::function<void(const LossRecord&)>;

struct TrainOutcome {
  std::vector<LossRecord> losses;
  double final_alpha = 0.5;
};

/// Runs cfg.train.epochs epochs of mini-batch SGD. Steps count from 1. In
/// learned alpha mode alpha starts at 0.5 and follows the fused-score
/// subgradient; otherwise it is pinned to the mode's value.
TrainOutcome train_model(DualStreamModel& model, const std::vector<Sample>& data,
                         const RunConfig& cfg, const StepCallback& on_step = {});

inline const char* kLossHeader = "step,attention_loss,optical_loss,rgb_loss,total_loss";

void write_losses_csv(const std::string& path, const std::vector<LossRecord>& losses);
std::vector<LossRecord> read_losses_csv(const std::string& path);

/// RGB-stream scores, one row per sample.
Matrix predict_rgb(const DualStreamModel& model, const std::vector<Sample>& data);
Matrix predict_motion(const DualStreamModel& model, const std::vector<Sample>& data);
/// Row-wise α-fusion of two score matrices.
Matrix fuse_matrix(const Matrix& rgb, const Matrix& motion, double alpha);
Matrix label_matrix(const std::vector<Sample>& data);

}  // namespace dsvit
