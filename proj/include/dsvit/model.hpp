#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsvit/backbone.hpp"
#include "dsvit/encoder.hpp"
#include "dsvit/params.hpp"
#include "dsvit/tokenizer.hpp"

namespace dsvit {

/// Architecture hyperparameters shared by both streams.
struct ModelConfig {
  BackboneConfig backbone;
  TokenizerConfig tokenizer;
  EncoderConfig encoder;
  std::size_t num_classes = 5;

  void validate() const;
  /// Token count entering the stage ViT (before the class token).
  std::size_t stage_token_count(int stage) const;
  /// Number of stage-3 columns appended to the stage-4 sequence.
  std::size_t cross_scale_count() const;
  /// Stable text form; one `key=value` per line.
  std::string canonical() const;
  /// FNV-1a 64 of canonical().
  std::uint64_t hash() const;
};

struct StreamOutput {
  Tensor logits;
  /// Attention maps of every encoder layer, keyed by backbone stage.
  std::map<int, std::vector<AttentionMap>> attention;
};

/// One multi-scale hybrid ViT: backbone, per-stage tokenizers and ViTs,
/// top-down cross-scale connection, and a head on the stage-4 class token.
class MshvitStream {
 public:
  MshvitStream(const ModelConfig& cfg, Rng& rng);

  StreamOutput forward(const Tensor& image) const;
  void visit_parameters(const std::string& prefix, const ParamVisitor& visit);
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  Backbone backbone_;
  StageTokenizer tokenizer3_;
  StageTokenizer tokenizer4_;
  VitStage vit3_;
  VitStage vit4_;
  std::optional<Tensor> cross_projection_;  // D×D
  Tensor head_weight_;                      // C×D
  Tensor head_bias_;                        // C
};

std::uint64_t fnv1a64(const std::string& text);

}  // namespace dsvit
