#include "dsvit/model.hpp"

#include <cstdio>
#include <sstream>

#include "dsvit/errors.hpp"
#include "dsvit/ops.hpp"

namespace dsvit {

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ModelConfig::validate() const {
  backbone.validate();
  encoder.validate();
  if (num_classes == 0) throw ConfigError("model.num_classes must be positive");
  if (tokenizer.patch == 0) throw ConfigError("tokenizer.patch must be positive");
  if (!(tokenizer.epsilon > 0.0)) throw ConfigError("tokenizer.epsilon must be positive");
  if (tokenizer.iterations == 0) throw ConfigError("tokenizer.iterations must be >= 1");
  for (int stage : {3, 4}) {
    std::size_t h = backbone.stage_height(stage), w = backbone.stage_width(stage);
    if (h % tokenizer.patch != 0 || w % tokenizer.patch != 0) {
      throw ConfigError("tokenizer.patch does not divide the stage " + std::to_string(stage) + " map");
    }
    std::size_t n = (h / tokenizer.patch) * (w / tokenizer.patch);
    if (tokenizer.kind == TokenizerKind::sinkhorn &&
        (tokenizer.clusters(stage) == 0 || tokenizer.clusters(stage) >= n)) {
      throw ConfigError("tokenizer.clusters_stage" + std::to_string(stage) +
                        " must be in [1, " + std::to_string(n) + ")");
    }
  }
  if (encoder.cross_scale == CrossScaleMode::sinkhorn_token &&
      tokenizer.kind != TokenizerKind::sinkhorn) {
    throw ConfigError("encoder.cross_scale=sinkhorn-token requires tokenizer.kind=sinkhorn");
  }
}

std::size_t ModelConfig::stage_token_count(int stage) const {
  std::size_t h = backbone.stage_height(stage), w = backbone.stage_width(stage);
  std::size_t n = (h / tokenizer.patch) * (w / tokenizer.patch);
  std::size_t own = tokenizer.kind == TokenizerKind::sinkhorn ? tokenizer.clusters(stage) : n;
  return stage == 4 ? own + cross_scale_count() : own;
}

std::size_t ModelConfig::cross_scale_count() const {
  std::size_t h = backbone.stage_height(3), w = backbone.stage_width(3);
  std::size_t n3 = (h / tokenizer.patch) * (w / tokenizer.patch);
  std::size_t t3 = tokenizer.kind == TokenizerKind::sinkhorn ? tokenizer.clusters(3) : n3;
  switch (encoder.cross_scale) {
    case CrossScaleMode::none: return 0;
    case CrossScaleMode::token: return n3;
    case CrossScaleMode::sinkhorn_token: return tokenizer.clusters(3);
    case CrossScaleMode::embedding: return t3 + 1;
  }
  return 0;
}

std::string ModelConfig::canonical() const {
  std::ostringstream out;
  out << "backbone.channels=" << backbone.channels[0] << "," << backbone.channels[1] << ","
      << backbone.channels[2] << "," << backbone.channels[3] << "\n"
      << "backbone.kernel=" << backbone.kernel << "\n"
      << "backbone.pool=" << backbone.pool << "\n"
      << "backbone.input=" << backbone.in_channels << "," << backbone.height << ","
      << backbone.width << "\n"
      << "tokenizer.kind=" << (tokenizer.kind == TokenizerKind::sinkhorn ? "sinkhorn" : "patch")
      << "\n"
      << "tokenizer.patch=" << tokenizer.patch << "\n"
      << "tokenizer.clusters_stage3=" << tokenizer.clusters_stage3 << "\n"
      << "tokenizer.clusters_stage4=" << tokenizer.clusters_stage4 << "\n";
  char eps[64];
  std::snprintf(eps, sizeof eps, "%.17g", tokenizer.epsilon);
  out << "tokenizer.epsilon=" << eps << "\n"
      << "tokenizer.iterations=" << tokenizer.iterations << "\n"
      << "encoder.depth=" << encoder.depth << "\n"
      << "encoder.heads=" << encoder.heads << "\n"
      << "encoder.dim=" << encoder.dim << "\n"
      << "encoder.ffn_dim=" << encoder.ffn_dim << "\n"
      << "encoder.cross_scale=" << to_string(encoder.cross_scale) << "\n"
      << "encoder.norm=" << (encoder.norm ? 1 : 0) << "\n"
      << "model.num_classes=" << num_classes << "\n";
  return out.str();
}

std::uint64_t ModelConfig::hash() const { return fnv1a64(canonical()); }

namespace {

const ModelConfig& validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

MshvitStream::MshvitStream(const ModelConfig& cfg, Rng& rng)
    : cfg_(validated(cfg)),
      backbone_(cfg.backbone, rng),
      tokenizer3_(cfg.backbone.stage_channels(3), cfg.encoder.dim, 3, cfg.tokenizer, rng),
      tokenizer4_(cfg.backbone.stage_channels(4), cfg.encoder.dim, 4, cfg.tokenizer, rng),
      vit3_(cfg.encoder, 3, cfg.stage_token_count(3), rng),
      vit4_(cfg.encoder, 4, cfg.stage_token_count(4), rng) {
  std::size_t d = cfg_.encoder.dim;
  if (cfg_.encoder.cross_scale != CrossScaleMode::none) {
    cross_projection_ = glorot_uniform({d, d}, d, d, rng);
  }
  head_weight_ = glorot_uniform({cfg_.num_classes, d}, d, cfg_.num_classes, rng);
  head_bias_ = Tensor({cfg_.num_classes}, 0.0, true);
}

StreamOutput MshvitStream::forward(const Tensor& image) const {
  FeaturePyramid pyramid = backbone_.forward(image);
  TokenizerOutput tok3 = tokenizer3_.forward(pyramid.taps.at(3));
  TokenizerOutput tok4 = tokenizer4_.forward(pyramid.taps.at(4));
  EncoderOutput enc3 = vit3_.forward(tok3.tokens);

  TokenSequence upper = tok4.tokens;
  switch (cfg_.encoder.cross_scale) {
    case CrossScaleMode::none: break;
    case CrossScaleMode::token:
      upper = cross_scale_connect(tok3.patch_tokens.tokens, upper, *cross_projection_);
      break;
    case CrossScaleMode::sinkhorn_token:
      upper = cross_scale_connect(tok3.tokens.tokens, upper, *cross_projection_);
      break;
    case CrossScaleMode::embedding:
      upper = cross_scale_connect(enc3.z, upper, *cross_projection_);
      break;
  }
  EncoderOutput enc4 = vit4_.forward(upper);

  StreamOutput out;
  out.logits = classification_head(slice(enc4.z, 1, 0, 1), head_weight_, head_bias_);
  out.attention[3] = std::move(enc3.attention);
  out.attention[4] = std::move(enc4.attention);
  return out;
}

void MshvitStream::visit_parameters(const std::string& prefix, const ParamVisitor& visit) {
  backbone_.visit_parameters(prefix + "backbone.", visit);
  tokenizer3_.visit_parameters(prefix + "tokenizer3.", visit);
  tokenizer4_.visit_parameters(prefix + "tokenizer4.", visit);
  vit3_.visit_parameters(prefix + "vit3.", visit);
  vit4_.visit_parameters(prefix + "vit4.", visit);
  if (cross_projection_) visit(prefix + "cross_scale.projection", *cross_projection_);
  visit(prefix + "head.weight", head_weight_);
  visit(prefix + "head.bias", head_bias_);
}

}  // namespace dsvit
