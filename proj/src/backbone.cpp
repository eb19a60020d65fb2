#include "dsvit/backbone.hpp"

#include "dsvit/errors.hpp"
#include "dsvit/ops.hpp"

namespace dsvit {

void BackboneConfig::validate() const {
  for (auto c : channels) {
    if (c == 0) throw ConfigError("backbone.channels entries must be positive");
  }
  if (kernel == 0 || kernel % 2 == 0) throw ConfigError("backbone.kernel must be odd");
  if (pool < 1) throw ConfigError("backbone.pool must be >= 1");
  if (in_channels == 0) throw ConfigError("backbone.in_channels must be positive");
  std::size_t div = 1;
  for (int i = 0; i < kNumStages; ++i) div *= pool;
  if (height == 0 || width == 0 || height % div != 0 || width % div != 0) {
    throw ConfigError("backbone input " + std::to_string(height) + "x" + std::to_string(width) +
                      " not divisible by pool^4 = " + std::to_string(div));
  }
}

std::size_t BackboneConfig::stage_height(int stage) const {
  std::size_t h = height;
  for (int i = 1; i < stage; ++i) h /= pool;
  return h;
}

std::size_t BackboneConfig::stage_width(int stage) const {
  std::size_t w = width;
  for (int i = 1; i < stage; ++i) w /= pool;
  return w;
}

Backbone::Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t cin = cfg_.in_channels;
  const std::size_t area = cfg_.kernel * cfg_.kernel;
  for (int s = 0; s < kNumStages; ++s) {
    std::size_t cout = cfg_.channels[s];
    kernels_[s] = glorot_uniform({cout, cin, cfg_.kernel, cfg_.kernel}, cin * area, cout * area, rng);
    biases_[s] = Tensor({cout, 1, 1}, 0.0, true);
    cin = cout;
  }
}

FeaturePyramid Backbone::forward(const Tensor& image) const {
  Shape expected{cfg_.in_channels, cfg_.height, cfg_.width};
  if (image.shape() != expected) {
    throw DimensionError("backbone expects image " + shape_string(expected) + ", got " +
                         shape_string(image.shape()));
  }
  FeaturePyramid out;
  Tensor x = image;
  for (int s = 0; s < kNumStages; ++s) {
    Tensor pre = relu(add(conv2d(x, kernels_[s], 1, cfg_.kernel / 2), biases_[s]));
    int stage = s + 1;
    if (stage >= 3) out.taps[stage] = pre;
    x = max_pool2d(pre, cfg_.pool);
  }
  out.final = x;
  return out;
}

void Backbone::visit_parameters(const std::string& prefix, const ParamVisitor& visit) {
  for (int s = 0; s < kNumStages; ++s) {
    std::string stage = prefix + "stage" + std::to_string(s + 1) + ".";
    visit(stage + "kernel", kernels_[s]);
    visit(stage + "bias", biases_[s]);
  }
}

}  // namespace dsvit
