#include "dsvit/encoder.hpp"

#include <cmath>

#include "dsvit/errors.hpp"
#include "dsvit/ops.hpp"

namespace dsvit {

CrossScaleMode parse_cross_scale_mode(const std::string& text) {
  if (text == "none") return CrossScaleMode::none;
  if (text == "token") return CrossScaleMode::token;
  if (text == "sinkhorn-token") return CrossScaleMode::sinkhorn_token;
  if (text == "embedding") return CrossScaleMode::embedding;
  throw ConfigError("unknown cross-scale mode '" + text +
                    "' (expected none, token, sinkhorn-token or embedding)");
}

std::string to_string(CrossScaleMode mode) {
  switch (mode) {
    case CrossScaleMode::none: return "none";
    case CrossScaleMode::token: return "token";
    case CrossScaleMode::sinkhorn_token: return "sinkhorn-token";
    case CrossScaleMode::embedding: return "embedding";
  }
  return "?";
}

void EncoderConfig::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError("encoder.dim (" + std::to_string(dim) + ") must be divisible by encoder.heads (" +
                      std::to_string(heads) + ")");
  }
  if (ffn_dim == 0) throw ConfigError("encoder.ffn_dim must be positive");
}

EncoderInput build_encoder_input(const TokenSequence& tokens, const Tensor& class_token,
                                 const Tensor& positional) {
  std::size_t d = tokens.dim();
  if (class_token.numel() != d) {
    throw DimensionError("class token " + shape_string(class_token.shape()) +
                         " does not match token dim " + std::to_string(d));
  }
  Shape expected{d, tokens.count() + 1};
  if (positional.shape() != expected) {
    throw DimensionError("positional encoding " + shape_string(positional.shape()) +
                         " does not match " + shape_string(expected));
  }
  Tensor cls = reshape(class_token, Shape{d, 1});
  return {add(concat({cls, tokens.tokens}, 1), positional)};
}

Tensor AttentionMap::weights() const {
  std::size_t m = size();
  std::vector<Tensor> parts;
  parts.reserve(heads.size());
  for (const auto& h : heads) parts.push_back(reshape(h, Shape{1, m, m}));
  return concat(parts, 0);
}

Tensor AttentionMap::head_average() const {
  Tensor acc = heads.front();
  for (std::size_t h = 1; h < heads.size(); ++h) acc = add(acc, heads[h]);
  if (heads.size() == 1) return acc;
  return scale(acc, 1.0 / static_cast<double>(heads.size()));
}

namespace {

// Attention sublayer without the residual term.
std::pair<Tensor, AttentionMap> attention_delta(const Tensor& z, const MhsaParams& params,
                                                std::size_t heads) {
  if (z.rank() != 2) throw DimensionError("attention input must be D×M, got " + shape_string(z.shape()));
  std::size_t d = z.dim(0);
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("model dim " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  Shape square_dd{d, d};
  for (const Tensor* w : {&params.wq, &params.wk, &params.wv, &params.wo}) {
    if (w->shape() != square_dd) {
      throw DimensionError("attention projection " + shape_string(w->shape()) +
                           " does not match model dim " + std::to_string(d));
    }
  }
  std::size_t head_dim = d / heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Tensor q = matmul(params.wq, z);
  Tensor k = matmul(params.wk, z);
  Tensor v = matmul(params.wv, z);
  AttentionMap map;
  std::vector<Tensor> outputs;
  for (std::size_t h = 0; h < heads; ++h) {
    std::size_t lo = h * head_dim, hi = lo + head_dim;
    Tensor qh = heads == 1 ? q : slice(q, 0, lo, hi);
    Tensor kh = heads == 1 ? k : slice(k, 0, lo, hi);
    Tensor vh = heads == 1 ? v : slice(v, 0, lo, hi);
    Tensor a = softmax(scale(matmul(transpose(qh), kh), inv_sqrt), 1);
    outputs.push_back(matmul(vh, transpose(a)));
    map.heads.push_back(a);
  }
  Tensor mixed = heads == 1 ? outputs.front() : concat(outputs, 0);
  return {add(matmul(params.wo, mixed), params.bo), std::move(map)};
}

Tensor ffn_delta(const Tensor& z, const FfnParams& p) {
  Tensor hidden = relu(add(matmul(p.w1, z), p.b1));
  return add(matmul(p.w2, hidden), p.b2);
}

}  // namespace

std::pair<Tensor, AttentionMap> mhsa_layer(const Tensor& z, const MhsaParams& params,
                                           std::size_t heads) {
  auto [delta, map] = attention_delta(z, params, heads);
  return {add(z, delta), std::move(map)};
}

Tensor ffn_layer(const Tensor& z, const FfnParams& p) { return add(z, ffn_delta(z, p)); }

Tensor scale_shift_norm(const Tensor& z, const NormParams& p) {
  double inv_d = 1.0 / static_cast<double>(z.dim(0));
  Tensor centered = sub(z, scale(sum(z, 0), inv_d));
  Tensor var = scale(sum(square(centered), 0), inv_d);
  Tensor normed = div(centered, sqrt(add_scalar(var, 1e-5)));
  return add(mul(normed, p.gain), p.shift);
}

namespace {

MhsaParams init_mhsa(std::size_t d, Rng& rng) {
  MhsaParams p;
  p.wq = glorot_uniform({d, d}, d, d, rng);
  p.wk = glorot_uniform({d, d}, d, d, rng);
  p.wv = glorot_uniform({d, d}, d, d, rng);
  p.wo = glorot_uniform({d, d}, d, d, rng);
  p.bo = Tensor({d, 1}, 0.0, true);
  return p;
}

FfnParams init_ffn(std::size_t d, std::size_t f, Rng& rng) {
  FfnParams p;
  p.w1 = glorot_uniform({f, d}, d, f, rng);
  p.b1 = Tensor({f, 1}, 0.0, true);
  p.w2 = glorot_uniform({d, f}, f, d, rng);
  p.b2 = Tensor({d, 1}, 0.0, true);
  return p;
}

NormParams init_norm(std::size_t d) {
  return {Tensor({d, 1}, 1.0, true), Tensor({d, 1}, 0.0, true)};
}

}  // namespace

Encoder::Encoder(const EncoderConfig& cfg, int stage, Rng& rng) : cfg_(cfg), stage_(stage) {
  cfg_.validate();
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    EncoderLayer layer;
    layer.attention = init_mhsa(cfg_.dim, rng);
    layer.ffn = init_ffn(cfg_.dim, cfg_.ffn_dim, rng);
    if (cfg_.norm) {
      layer.norm_attention = init_norm(cfg_.dim);
      layer.norm_ffn = init_norm(cfg_.dim);
    }
    layers_.push_back(std::move(layer));
  }
}

EncoderOutput Encoder::forward(const EncoderInput& input) const {
  EncoderOutput out{input.z0, {}};
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Tensor z = out.z;
    std::pair<Tensor, AttentionMap> attended;
    if (cfg_.norm) {
      auto [delta, map] = attention_delta(scale_shift_norm(z, layer.norm_attention),
                                          layer.attention, cfg_.heads);
      attended = {add(z, delta), std::move(map)};
      Tensor normed = scale_shift_norm(attended.first, layer.norm_ffn);
      out.z = add(attended.first, ffn_delta(normed, layer.ffn));
    } else {
      attended = mhsa_layer(z, layer.attention, cfg_.heads);
      out.z = ffn_layer(attended.first, layer.ffn);
    }
    attended.second.layer = l;
    attended.second.stage = stage_;
    out.attention.push_back(std::move(attended.second));
  }
  return out;
}

void Encoder::visit_parameters(const std::string& prefix, const ParamVisitor& visit) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    std::string p = prefix + "layer" + std::to_string(l) + ".";
    auto& layer = layers_[l];
    visit(p + "attn.wq", layer.attention.wq);
    visit(p + "attn.wk", layer.attention.wk);
    visit(p + "attn.wv", layer.attention.wv);
    visit(p + "attn.wo", layer.attention.wo);
    visit(p + "attn.bo", layer.attention.bo);
    visit(p + "ffn.w1", layer.ffn.w1);
    visit(p + "ffn.b1", layer.ffn.b1);
    visit(p + "ffn.w2", layer.ffn.w2);
    visit(p + "ffn.b2", layer.ffn.b2);
    if (cfg_.norm) {
      visit(p + "norm_attn.gain", layer.norm_attention.gain);
      visit(p + "norm_attn.shift", layer.norm_attention.shift);
      visit(p + "norm_ffn.gain", layer.norm_ffn.gain);
      visit(p + "norm_ffn.shift", layer.norm_ffn.shift);
    }
  }
}

VitStage::VitStage(const EncoderConfig& cfg, int stage, std::size_t token_count, Rng& rng)
    : token_count_(token_count) {
  class_token_ = glorot_uniform({cfg.dim}, 1, cfg.dim, rng);
  positional_ = glorot_uniform({cfg.dim, token_count + 1}, token_count + 1, cfg.dim, rng);
  encoder_ = Encoder(cfg, stage, rng);
}

EncoderOutput VitStage::forward(const TokenSequence& tokens) const {
  return encoder_.forward(build_encoder_input(tokens, class_token_, positional_));
}

void VitStage::visit_parameters(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "class_token", class_token_);
  visit(prefix + "positional", positional_);
  encoder_.visit_parameters(prefix, visit);
}

TokenSequence cross_scale_connect(const Tensor& lower, const TokenSequence& upper,
                                  const Tensor& projection) {
  if (lower.rank() != 2 || projection.rank() != 2 || projection.dim(1) != lower.dim(0) ||
      projection.dim(0) != upper.dim()) {
    throw DimensionError("cross-scale projection " + shape_string(projection.shape()) +
                         " cannot map " + shape_string(lower.shape()) + " onto tokens " +
                         shape_string(upper.tokens.shape()));
  }
  return {concat({upper.tokens, matmul(projection, lower)}, 1), upper.stage};
}

Tensor classification_head(const Tensor& class_column, const Tensor& weight, const Tensor& bias) {
  std::size_t d = class_column.numel();
  if (weight.rank() != 2 || weight.dim(1) != d || bias.numel() != weight.dim(0)) {
    throw DimensionError("classification head " + shape_string(weight.shape()) +
                         " does not fit feature of length " + std::to_string(d));
  }
  std::size_t c = weight.dim(0);
  Tensor logits = add(matmul(weight, reshape(class_column, Shape{d, 1})), reshape(bias, Shape{c, 1}));
  return reshape(logits, Shape{c});
}

}  // namespace dsvit
