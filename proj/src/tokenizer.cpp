#include "dsvit/tokenizer.hpp"

#include <cmath>

#include "dsvit/errors.hpp"
#include "dsvit/ops.hpp"

namespace dsvit {

namespace {

// Euclidean norm of every column of a D×N matrix, as a 1×N row. The
// subgradient at a zero column is taken as zero.
Tensor column_norms(const Tensor& x) {
  std::size_t d = x.dim(0), n = x.dim(1);
  const auto& xv = x.values();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += xv[i * n + j] * xv[i * n + j];
  }
  for (auto& v : out) v = std::sqrt(v);
  auto xn = x.node();
  return make_result(Shape{1, n}, std::move(out), {&x}, [xn, d, n](const detail::Node& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t j = 0; j < n; ++j) {
      double norm = self.data[j];
      if (norm == 0.0) continue;
      double g = self.grad[j] / norm;
      for (std::size_t i = 0; i < d; ++i) gx[i * n + j] += g * xn->data[i * n + j];
    }
  });
}

}  // namespace

TokenSequence patchify(const Tensor& feature_map, std::size_t patch, int stage) {
  if (feature_map.rank() != 3 || patch == 0 || feature_map.dim(1) % patch != 0 ||
      feature_map.dim(2) % patch != 0) {
    throw DimensionError("patch size " + std::to_string(patch) + " does not divide map " +
                         shape_string(feature_map.shape()));
  }
  std::size_t c = feature_map.dim(0), h = feature_map.dim(1), w = feature_map.dim(2);
  std::size_t ph = h / patch, pw = w / patch;
  std::size_t n = ph * pw;
  std::size_t d = c * patch * patch;
  std::vector<std::size_t> index(d * n);
  for (std::size_t py = 0; py < ph; ++py) {
    for (std::size_t px = 0; px < pw; ++px) {
      std::size_t token = py * pw + px;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < patch; ++i) {
          for (std::size_t j = 0; j < patch; ++j) {
            std::size_t row = (ch * patch + i) * patch + j;
            index[row * n + token] = (ch * h + py * patch + i) * w + px * patch + j;
          }
        }
      }
    }
  }
  return {gather(feature_map, Shape{d, n}, std::move(index)), stage};
}

TokenSequence linear_embed(const TokenSequence& tokens, const Tensor& projection) {
  if (projection.rank() != 2 || projection.dim(1) != tokens.dim()) {
    throw DimensionError("projection " + shape_string(projection.shape()) +
                         " does not fit tokens " + shape_string(tokens.tokens.shape()));
  }
  return {matmul(projection, tokens.tokens), tokens.stage};
}

Tensor cosine_similarity(const Tensor& tokens, const Tensor& centers) {
  if (tokens.rank() != 2 || centers.rank() != 2 || tokens.dim(0) != centers.dim(0)) {
    throw DimensionError("cosine similarity between tokens " + shape_string(tokens.shape()) +
                         " and centers " + shape_string(centers.shape()));
  }
  std::size_t k = centers.dim(1);
  Tensor dots = matmul(transpose(centers), tokens);
  Tensor center_norms = reshape(column_norms(centers), Shape{k, 1});
  Tensor denom = add_scalar(matmul(center_norms, column_norms(tokens)), kCosineEps);
  return div(dots, denom);
}

Tensor sinkhorn_assign(const Tensor& similarity, double epsilon, std::size_t iterations) {
  if (similarity.rank() != 2) {
    throw DimensionError("sinkhorn expects a K×N matrix, got " +
                         shape_string(similarity.shape()));
  }
  if (!(epsilon > 0.0)) throw ContractError("sinkhorn epsilon must be positive");
  if (iterations == 0) throw ContractError("sinkhorn needs at least one iteration");
  for (std::size_t i = 0; i < similarity.numel(); ++i) {
    if (!std::isfinite(similarity.values()[i])) {
      throw ContractError("sinkhorn input has a non-finite entry at index " + std::to_string(i));
    }
  }
  std::size_t k = similarity.dim(0), n = similarity.dim(1);
  const double log_row_target = std::log(static_cast<double>(n) / static_cast<double>(k));

  Tensor logits = scale(similarity, 1.0 / epsilon);
  Tensor v(Shape{1, n}, 0.0);
  Tensor u(Shape{k, 1}, 0.0);
  for (std::size_t it = 0; it < iterations; ++it) {
    u = add_scalar(scale(logsumexp(add(logits, v), 1), -1.0), log_row_target);
    v = scale(logsumexp(add(logits, u), 0), -1.0);
  }
  return exp(add(add(logits, u), v));
}

TokenSequence condense_tokens(const TokenSequence& patch_tokens, const Tensor& assignment) {
  if (assignment.rank() != 2 || assignment.dim(1) != patch_tokens.count()) {
    throw DimensionError("assignment " + shape_string(assignment.shape()) +
                         " does not match token count " + std::to_string(patch_tokens.count()));
  }
  return {matmul(patch_tokens.tokens, transpose(assignment)), patch_tokens.stage};
}

StageTokenizer::StageTokenizer(std::size_t in_channels, std::size_t model_dim, int stage,
                               const TokenizerConfig& cfg, Rng& rng)
    : cfg_(cfg), stage_(stage) {
  std::size_t patch_dim = in_channels * cfg.patch * cfg.patch;
  projection_ = glorot_uniform({model_dim, patch_dim}, patch_dim, model_dim, rng);
  if (cfg_.kind == TokenizerKind::sinkhorn) {
    std::size_t k = cfg_.clusters(stage);
    centers_ = glorot_uniform({model_dim, k}, model_dim, k, rng);
  }
}

TokenizerOutput StageTokenizer::forward(const Tensor& feature_map) const {
  TokenSequence embedded = linear_embed(patchify(feature_map, cfg_.patch, stage_), projection_);
  if (cfg_.kind == TokenizerKind::patch) return {embedded, embedded, std::nullopt};
  if (centers_.dim(1) >= embedded.count()) {
    throw ConfigError("stage " + std::to_string(stage_) + ": cluster count " +
                      std::to_string(centers_.dim(1)) + " must be below token count " +
                      std::to_string(embedded.count()));
  }
  Tensor q = sinkhorn_assign(cosine_similarity(embedded.tokens, centers_), cfg_.epsilon,
                             cfg_.iterations);
  return {embedded, condense_tokens(embedded, q), q};
}

void StageTokenizer::visit_parameters(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + "projection", projection_);
  if (cfg_.kind == TokenizerKind::sinkhorn) visit(prefix + "centers", centers_);
}

}  // namespace dsvit
