#include "dsvit/training.hpp"

#include <fstream>

#include "dsvit/errors.hpp"
#include "dsvit/random.hpp"
#include "dsvit/text.hpp"

namespace dsvit {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(derive_seed(seed, 0x5eedULL), epoch));
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainOutcome train_model(DualStreamModel& model, const std::vector<Sample>& data,
                         const RunConfig& cfg, const StepCallback& on_step) {
  if (cfg.train.epochs > 0 && data.empty()) throw ContractError("training needs at least one sample");
  if (cfg.train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  SgdOptimizer opt;
  opt.lr = cfg.train.lr;
  opt.alpha_lr = cfg.alpha_mode == AlphaMode::learned ? cfg.train.alpha_lr : 0.0;
  model.set_alpha(initial_alpha(cfg.alpha_mode));

  TrainOutcome outcome;
  std::size_t step = 0;
  std::vector<Sample> batch;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    std::vector<std::size_t> order = epoch_order(data.size(), cfg.train.seed, epoch);
    for (std::size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
      std::size_t end = std::min(order.size(), start + cfg.train.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      LossRecord rec = train_step(model, batch, opt, ++step);
      outcome.losses.push_back(rec);
      if (on_step) on_step(rec);
    }
  }
  outcome.final_alpha = model.alpha();
  return outcome;
}

void write_losses_csv(const std::string& path, const std::vector<LossRecord>& losses) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << kLossHeader << "\n";
  for (const auto& r : losses) {
    out << r.step << "," << format_exact(r.attention_loss) << "," << format_exact(r.optical_loss)
        << "," << format_exact(r.rgb_loss) << "," << format_exact(r.total_loss) << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

std::vector<LossRecord> read_losses_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kLossHeader) {
    throw IoError(path + ": expected header " + std::string(kLossHeader));
  }
  std::vector<LossRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    LossRecord r;
    if (f.size() != 5 || !parse_size(f[0], r.step) || !parse_double(f[1], r.attention_loss) ||
        !parse_double(f[2], r.optical_loss) || !parse_double(f[3], r.rgb_loss) ||
        !parse_double(f[4], r.total_loss)) {
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed loss row");
    }
    out.push_back(r);
  }
  return out;
}

Matrix predict_rgb(const DualStreamModel& model, const std::vector<Sample>& data) {
  Matrix out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(model.infer_rgb(s.rgb));
  return out;
}

Matrix predict_motion(const DualStreamModel& model, const std::vector<Sample>& data) {
  Matrix out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(model.infer_motion(s.motion));
  return out;
}

Matrix fuse_matrix(const Matrix& rgb, const Matrix& motion, double alpha) {
  if (rgb.size() != motion.size()) {
    throw DimensionError("fusion of " + std::to_string(rgb.size()) + " and " +
                         std::to_string(motion.size()) + " rows");
  }
  Matrix out;
  out.reserve(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) out.push_back(fuse_predictions(rgb[i], motion[i], alpha));
  return out;
}

Matrix label_matrix(const std::vector<Sample>& data) {
  Matrix out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.labels.values());
  return out;
}

}  // namespace dsvit
