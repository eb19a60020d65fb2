#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dsvit/params.hpp"
#include "dsvit/random.hpp"
#include "dsvit/tensor.hpp"
#include "dsvit/tokenizer.hpp"

namespace dsvit {

/// Which stage-3 representation is injected into the stage-4 token stream.
enum class CrossScaleMode { none, token, sinkhorn_token, embedding };

CrossScaleMode parse_cross_scale_mode(const std::string& text);
std::string to_string(CrossScaleMode mode);

struct EncoderConfig {
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t dim = 32;
  std::size_t ffn_dim = 64;
  CrossScaleMode cross_scale = CrossScaleMode::embedding;
  /// Scale-shift normalization before each sublayer.
  bool norm = true;

  void validate() const;
};

/// Z_0 = [x_cls ⊕ tokens] + E_pos, shape D×(N+1); column 0 is the class slot.
struct EncoderInput {
  Tensor z0;
};

EncoderInput build_encoder_input(const TokenSequence& tokens, const Tensor& class_token,
                                 const Tensor& positional);

/// Post-softmax attention of one layer; one M×M row-stochastic matrix per head.
struct AttentionMap {
  std::vector<Tensor> heads;
  std::size_t layer = 0;
  int stage = 0;

  std::size_t size() const { return heads.front().dim(0); }
  /// heads × M × M
  Tensor weights() const;
  Tensor head_average() const;
};

struct MhsaParams {
  Tensor wq, wk, wv, wo;  // D×D
  Tensor bo;              // D×1
};

struct FfnParams {
  Tensor w1, b1;  // F×D, F×1
  Tensor w2, b2;  // D×F, D×1
};

struct NormParams {
  Tensor gain, shift;  // D×1
};

/// Multi-head self-attention with output projection and residual:
/// Z' = Z + Wo·concat_h(V_h·A_hᵀ) + bo, A_h = softmax(Q_hᵀK_h / sqrt(D/heads)) row-wise.
std::pair<Tensor, AttentionMap> mhsa_layer(const Tensor& z, const MhsaParams& params,
                                           std::size_t heads);

/// Z + W2·relu(W1·Z + b1) + b2
Tensor ffn_layer(const Tensor& z, const FfnParams& params);

/// Per-token standardization followed by a learned scale and shift.
Tensor scale_shift_norm(const Tensor& z, const NormParams& params);

struct EncoderLayer {
  MhsaParams attention;
  FfnParams ffn;
  NormParams norm_attention;
  NormParams norm_ffn;
};

struct EncoderOutput {
  Tensor z;
  std::vector<AttentionMap> attention;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, int stage, Rng& rng);

  EncoderOutput forward(const EncoderInput& input) const;
  void visit_parameters(const std::string& prefix, const ParamVisitor& visit);

  std::vector<EncoderLayer>& layers() { return layers_; }

 private:
  EncoderConfig cfg_;
  int stage_ = 0;
  std::vector<EncoderLayer> layers_;
};

/// Class token, positional encoding and encoder for one backbone stage.
class VitStage {
 public:
  VitStage(const EncoderConfig& cfg, int stage, std::size_t token_count, Rng& rng);

  EncoderOutput forward(const TokenSequence& tokens) const;
  void visit_parameters(const std::string& prefix, const ParamVisitor& visit);

  std::size_t token_count() const { return token_count_; }
  Encoder& encoder() { return encoder_; }

 private:
  std::size_t token_count_;
  Tensor class_token_;  // D
  Tensor positional_;   // D×(N+1)
  Encoder encoder_;
};

/// Appends projection·lower (D×k) to the upper-stage tokens (D×n).
TokenSequence cross_scale_connect(const Tensor& lower, const TokenSequence& upper,
                                  const Tensor& projection);

/// logits = W·z_cls + b for a class column of length D.
Tensor classification_head(const Tensor& class_column, const Tensor& weight, const Tensor& bias);

}  // namespace dsvit
