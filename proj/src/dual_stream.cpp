#include "dsvit/dual_stream.hpp"

#include <algorithm>
#include <cmath>

#include "dsvit/errors.hpp"
#include "dsvit/ops.hpp"
#include "dsvit/random.hpp"

namespace dsvit {

void DualStreamConfig::validate() const {
  for (int s : alignment_stages) {
    if (s != 3 && s != 4) {
      throw ConfigError("alignment stage " + std::to_string(s) + " is not a tapped stage (3 or 4)");
    }
  }
  for (double w : {rgb_weight, optical_weight, attention_weight}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be nonnegative");
  }
}

namespace {

MshvitStream make_stream(const ModelConfig& cfg, std::uint64_t seed, std::uint64_t stream) {
  Rng rng(derive_seed(seed, stream));
  return MshvitStream(cfg, rng);
}

std::vector<double> scores_of(const MshvitStream& stream, const Tensor& image) {
  Tensor probs = sigmoid(stream.forward(image.detach()).logits);
  return probs.values();
}

}  // namespace

DualStreamModel::DualStreamModel(const ModelConfig& model, const DualStreamConfig& dual,
                                 std::uint64_t seed)
    : dual_(dual), rgb_(make_stream(model, seed, 1)), motion_(make_stream(model, seed, 2)) {
  dual_.validate();
}

void DualStreamModel::set_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in [0, 1]");
  alpha_ = alpha;
}

void DualStreamModel::visit_parameters(const ParamVisitor& visit) {
  rgb_.visit_parameters("rgb.", visit);
  motion_.visit_parameters("motion.", visit);
}

std::vector<Tensor> DualStreamModel::parameters() {
  std::vector<Tensor> out;
  visit_parameters([&](const std::string&, Tensor& p) { out.push_back(p); });
  return out;
}

std::vector<double> DualStreamModel::infer_rgb(const Tensor& image) const {
  return scores_of(rgb_, image);
}

std::vector<double> DualStreamModel::infer_motion(const Tensor& image) const {
  return scores_of(motion_, image);
}

Tensor bce_loss(const Tensor& probabilities, const Tensor& labels) {
  if (probabilities.numel() != labels.numel()) {
    throw DimensionError("bce: " + std::to_string(probabilities.numel()) + " predictions vs " +
                         std::to_string(labels.numel()) + " labels");
  }
  Shape flat{probabilities.numel()};
  Tensor p = clamp(reshape(probabilities, flat), kProbabilityClamp, 1.0 - kProbabilityClamp);
  Tensor y = reshape(labels, flat);
  Tensor one_minus_p = add_scalar(scale(p, -1.0), 1.0);
  Tensor one_minus_y = add_scalar(scale(y, -1.0), 1.0);
  Tensor likelihood = add(mul(y, log(p)), mul(one_minus_y, log(one_minus_p)));
  return scale(mean(likelihood), -1.0);
}

Tensor attention_alignment_loss(const std::vector<AttentionMap>& rgb,
                                const std::vector<AttentionMap>& motion) {
  if (rgb.size() != motion.size()) {
    throw ContractError("alignment needs paired maps: " + std::to_string(rgb.size()) + " vs " +
                        std::to_string(motion.size()));
  }
  if (rgb.empty()) return Tensor::scalar(0.0);
  Tensor total;
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    Tensor a = rgb[i].head_average();
    Tensor b = motion[i].head_average();
    if (a.shape() != b.shape() || rgb[i].stage != motion[i].stage) {
      throw ContractError("attention maps at stage " + std::to_string(rgb[i].stage) +
                          " have mismatched shapes " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()));
    }
    Tensor mse = mean(square(sub(a, b)));
    total = i == 0 ? mse : add(total, mse);
  }
  if (rgb.size() == 1) return total;
  return scale(total, 1.0 / static_cast<double>(rgb.size()));
}

namespace {

std::vector<AttentionMap> final_layer_maps(const StreamOutput& out, const std::vector<int>& stages,
                                           bool detach) {
  std::vector<AttentionMap> maps;
  for (int s : stages) {
    const auto& layers = out.attention.at(s);
    if (layers.empty()) {
      throw ContractError("stage " + std::to_string(s) + " has no encoder layers to align");
    }
    AttentionMap m = layers.back();
    if (detach) {
      for (auto& h : m.heads) h = h.detach();
    }
    maps.push_back(std::move(m));
  }
  return maps;
}

}  // namespace

LossTerms total_loss(const DualStreamModel& model, const Tensor& rgb_image,
                     const Tensor& motion_image, const Tensor& labels) {
  const DualStreamConfig& cfg = model.dual_config();
  StreamOutput r = model.rgb().forward(rgb_image);
  StreamOutput o = model.motion().forward(motion_image);
  Tensor pr = sigmoid(r.logits);
  Tensor po = sigmoid(o.logits);

  LossTerms terms;
  terms.rgb = scale(bce_loss(pr, labels), cfg.rgb_weight);
  terms.optical = scale(bce_loss(po, labels), cfg.optical_weight);
  terms.attention =
      scale(attention_alignment_loss(final_layer_maps(r, cfg.alignment_stages, false),
                                     final_layer_maps(o, cfg.alignment_stages,
                                                      cfg.stop_motion_gradient)),
            cfg.attention_weight);
  terms.total = add(add(terms.rgb, terms.optical), terms.attention);
  terms.record.rgb_loss = terms.rgb.item();
  terms.record.optical_loss = terms.optical.item();
  terms.record.attention_loss = terms.attention.item();
  terms.record.total_loss = terms.total.item();
  terms.rgb_scores = pr.values();
  terms.motion_scores = po.values();
  return terms;
}

std::vector<double> fuse_predictions(std::span<const double> rgb, std::span<const double> motion,
                                     double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractError("fusion alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
  if (rgb.size() != motion.size()) {
    throw DimensionError("fusion of " + std::to_string(rgb.size()) + " and " +
                         std::to_string(motion.size()) + " scores");
  }
  std::vector<double> out(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    out[i] = alpha * rgb[i] + (1.0 - alpha) * motion[i];
  }
  return out;
}

double update_alpha(double alpha, double grad, double lr) {
  return std::clamp(alpha - lr * grad, 0.0, 1.0);
}

double alpha_subgradient(std::span<const double> rgb, std::span<const double> motion,
                         std::span<const double> labels, double alpha) {
  if (rgb.size() != labels.size() || motion.size() != labels.size()) {
    throw DimensionError("alpha subgradient: score and label lengths differ");
  }
  double g = 0.0;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    double p = alpha * rgb[c] + (1.0 - alpha) * motion[c];
    if (p <= kProbabilityClamp || p >= 1.0 - kProbabilityClamp) continue;
    double dloss_dp = -(labels[c] / p - (1.0 - labels[c]) / (1.0 - p));
    g += dloss_dp * (rgb[c] - motion[c]);
  }
  return g / static_cast<double>(labels.size());
}

LossRecord train_step(DualStreamModel& model, std::span<const Sample> batch,
                      const SgdOptimizer& optimizer, std::size_t step) {
  if (batch.empty()) throw ContractError("train_step needs a non-empty batch");
  std::vector<Tensor> params = model.parameters();
  for (auto& p : params) p.zero_grad();

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossRecord avg;
  avg.step = step;
  double alpha_grad = 0.0;
  for (const Sample& s : batch) {
    LossTerms terms = total_loss(model, s.rgb, s.motion, s.labels);
    if (!std::isfinite(terms.record.total_loss)) {
      throw DivergenceError(step, "total loss is " + std::to_string(terms.record.total_loss));
    }
    backward(scale(terms.total, inv_b));
    avg.rgb_loss += terms.record.rgb_loss * inv_b;
    avg.optical_loss += terms.record.optical_loss * inv_b;
    avg.attention_loss += terms.record.attention_loss * inv_b;
    avg.total_loss += terms.record.total_loss * inv_b;
    if (optimizer.alpha_lr > 0.0) {
      alpha_grad += inv_b * alpha_subgradient(terms.rgb_scores, terms.motion_scores,
                                              s.labels.values(), model.alpha());
    }
  }
  if (optimizer.lr != 0.0) {
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      auto values = p.mutable_data();
      const auto& g = p.node()->grad;
      for (std::size_t i = 0; i < values.size(); ++i) values[i] -= optimizer.lr * g[i];
    }
  }
  if (optimizer.alpha_lr > 0.0) {
    model.set_alpha(update_alpha(model.alpha(), alpha_grad, optimizer.alpha_lr));
  }
  return avg;
}

}  // namespace dsvit
