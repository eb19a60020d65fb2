#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "dsvit/params.hpp"
#include "dsvit/random.hpp"
#include "dsvit/tensor.hpp"

namespace dsvit {

enum class TokenizerKind { patch, sinkhorn };

struct TokenizerConfig {
  TokenizerKind kind = TokenizerKind::sinkhorn;
  std::size_t patch = 1;
  std::size_t clusters_stage3 = 16;
  std::size_t clusters_stage4 = 8;
  double epsilon = 0.05;
  std::size_t iterations = 3;

  std::size_t clusters(int stage) const { return stage == 3 ? clusters_stage3 : clusters_stage4; }
};

/// Tokens stored column-wise: D×N.
struct TokenSequence {
  Tensor tokens;
  int stage = 0;

  std::size_t dim() const { return tokens.dim(0); }
  std::size_t count() const { return tokens.dim(1); }
};

/// Splits C×H×W into non-overlapping P×P patches, one token per patch in
/// row-major patch order. Token entry c·P² + i·P + j holds map[c][py·P+i][px·P+j].
TokenSequence patchify(const Tensor& feature_map, std::size_t patch, int stage = 0);

/// projection (D'×D) applied to every token.
TokenSequence linear_embed(const TokenSequence& tokens, const Tensor& projection);

inline constexpr double kCosineEps = 1e-8;

/// V[k,n] = <c_k, t_n> / (|c_k| |t_n| + 1e-8), shape K×N.
Tensor cosine_similarity(const Tensor& tokens, const Tensor& centers);

/// Entropic balanced assignment computed in the log domain. Alternates a row
/// scaling (targets N/K) and a column scaling (targets 1) `iterations` times,
/// starting from exp(V/epsilon); the column step runs last.
Tensor sinkhorn_assign(const Tensor& similarity, double epsilon, std::size_t iterations);

/// T_s = T_p · Qᵀ, shape D×K.
TokenSequence condense_tokens(const TokenSequence& patch_tokens, const Tensor& assignment);

struct TokenizerOutput {
  TokenSequence patch_tokens;      // embedded T_p
  TokenSequence tokens;            // T_s for sinkhorn, T_p for patch
  std::optional<Tensor> assignment;
};

/// Patchify → linear embedding → optional Sinkhorn condensation for one stage.
class StageTokenizer {
 public:
  StageTokenizer(std::size_t in_channels, std::size_t model_dim, int stage,
                 const TokenizerConfig& cfg, Rng& rng);

  TokenizerOutput forward(const Tensor& feature_map) const;
  void visit_parameters(const std::string& prefix, const ParamVisitor& visit);

 private:
  TokenizerConfig cfg_;
  int stage_;
  Tensor projection_;  // D_model × (P²C)
  Tensor centers_;     // D_model × K
};

}  // namespace dsvit
