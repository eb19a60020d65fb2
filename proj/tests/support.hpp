#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dsvit/config.hpp"
#include "dsvit/dual_stream.hpp"
#include "dsvit/model.hpp"
#include "dsvit/random.hpp"
#include "dsvit/tensor.hpp"

namespace dsvit::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  return uniform_tensor(std::move(shape), lo, hi, rng, requires_grad);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

/// C[i][j] = Σ_p A[i][p] B[p][j] by triple loop.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                        std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

/// Direct nested-loop cross-correlation with zero padding.
inline std::vector<double> naive_conv(const std::vector<double>& in, std::size_t c, std::size_t h,
                                      std::size_t w, const std::vector<double>& ker,
                                      std::size_t cout, std::size_t p, std::size_t stride,
                                      std::size_t pad, std::size_t& oh, std::size_t& ow) {
  oh = (h + 2 * pad - p) / stride + 1;
  ow = (w + 2 * pad - p) / stride + 1;
  std::vector<double> out(cout * oh * ow, 0.0);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) {
              long yy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
              long xx = static_cast<long>(x * stride + j) - static_cast<long>(pad);
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              s += in[(ci * h + yy) * w + xx] * ker[((o * c + ci) * p + i) * p + j];
            }
        out[(o * oh + y) * ow + x] = s;
      }
  return out;
}

/// 16×16 inputs, four narrow stages, one-layer two-head encoders.
inline ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.backbone.channels = {2, 3, 3, 4};
  cfg.backbone.height = 16;
  cfg.backbone.width = 16;
  cfg.tokenizer.clusters_stage3 = 4;
  cfg.tokenizer.clusters_stage4 = 2;
  cfg.encoder.depth = 1;
  cfg.encoder.heads = 2;
  cfg.encoder.dim = 4;
  cfg.encoder.ffn_dim = 6;
  return cfg;
}

inline Sample random_sample(const ModelConfig& cfg, Rng& rng) {
  Shape img{cfg.backbone.in_channels, cfg.backbone.height, cfg.backbone.width};
  Sample s{uniform_tensor(img, 0.0, 1.0, rng), uniform_tensor(img, 0.0, 1.0, rng),
           Tensor(Shape{cfg.num_classes}, 0.0)};
  for (auto& v : s.labels.mutable_data()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
  return s;
}

// Plain-domain alternating normalization: rows to N/K, then columns to 1.
inline std::vector<double> sinkhorn_oracle(const std::vector<double>& v, std::size_t k, std::size_t n,
                                    double eps, std::size_t iters) {
  std::vector<double> q(k * n);
  for (std::size_t i = 0; i < k * n; ++i) q[i] = std::exp(v[i] / eps);
  double row_target = static_cast<double>(n) / static_cast<double>(k);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t r = 0; r < k; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) s += q[r * n + c];
      for (std::size_t c = 0; c < n; ++c) q[r * n + c] *= row_target / s;
    }
    for (std::size_t c = 0; c < n; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < k; ++r) s += q[r * n + c];
      for (std::size_t r = 0; r < k; ++r) q[r * n + c] /= s;
    }
  }
  return q;
}

struct Marginals {
  double col = 0.0, row = 0.0;
};

inline Marginals marginal_errors(const Tensor& q) {
  std::size_t k = q.dim(0), n = q.dim(1);
  Marginals m;
  for (std::size_t c = 0; c < n; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < k; ++r) s += q.values()[r * n + c];
    m.col = std::max(m.col, std::fabs(s - 1.0));
  }
  for (std::size_t r = 0; r < k; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += q.values()[r * n + c];
    m.row = std::max(m.row, std::fabs(s - static_cast<double>(n) / static_cast<double>(k)));
  }
  return m;
}


/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ static_cast<std::uint64_t>(
                std::filesystem::file_time_type::clock::now().time_since_epoch().count()));
    path_ = std::filesystem::temp_directory_path() /
            ("dsvit_" + tag + "_" + std::to_string(rng.next() % 1000000007ULL));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace dsvit::test
