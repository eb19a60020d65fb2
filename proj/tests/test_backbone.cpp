#include <doctest.h>

#include <map>
#include <string>
#include <vector>

#include "dsvit/backbone.hpp"
#include "dsvit/errors.hpp"
#include "dsvit/ops.hpp"
#include "support.hpp"

using namespace dsvit;
using dsvit::test::max_abs_diff;
using dsvit::test::naive_conv;
using dsvit::test::random_tensor;

namespace {

std::map<std::string, Tensor> params_of(Backbone& bb) {
  std::map<std::string, Tensor> out;
  bb.visit_parameters("", [&](const std::string& name, Tensor& t) { out[name] = t; });
  return out;
}

std::vector<double> pool_oracle(const std::vector<double>& in, std::size_t c, std::size_t h,
                                std::size_t w, std::size_t win) {
  std::size_t oh = h / win, ow = w / win;
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double best = in[(ch * h + y * win) * w + x * win];
        for (std::size_t i = 0; i < win; ++i)
          for (std::size_t j = 0; j < win; ++j)
            best = std::max(best, in[(ch * h + y * win + i) * w + x * win + j]);
        out[(ch * oh + y) * ow + x] = best;
      }
  return out;
}

}  // namespace

TEST_CASE("default backbone tap shapes") {
  BackboneConfig cfg;
  Rng rng(1);
  Backbone bb(cfg, rng);
  Tensor img = random_tensor({3, 64, 64}, rng, 0, 1);
  FeaturePyramid fp = bb.forward(img);
  REQUIRE(fp.taps.size() == 2);
  CHECK(fp.taps.at(3).shape() == Shape{32, 16, 16});
  CHECK(fp.taps.at(4).shape() == Shape{64, 8, 8});
  CHECK(fp.final.shape() == Shape{64, 4, 4});
}

TEST_CASE("zero image with zero biases gives zero taps") {
  BackboneConfig cfg;
  Rng rng(2);
  Backbone bb(cfg, rng);
  bb.visit_parameters("", [](const std::string& name, Tensor& t) {
    if (name.find("bias") != std::string::npos) {
      for (auto& v : t.mutable_data()) v = 0.0;
    }
  });
  FeaturePyramid fp = bb.forward(Tensor({3, 64, 64}, 0.0));
  for (int s : {3, 4})
    for (double v : fp.taps.at(s).values()) CHECK(v == 0.0);
}

TEST_CASE("backbone equals a manual composition of the primitives") {
  BackboneConfig cfg;
  cfg.channels = {3, 4, 5, 6};
  cfg.height = 32;
  cfg.width = 16;
  Rng rng(3);
  Backbone bb(cfg, rng);
  auto params = params_of(bb);
  for (auto& [name, t] : params) {
    if (name.find("bias") != std::string::npos) {
      for (auto& v : t.mutable_data()) v = rng.uniform(-0.1, 0.1);
    }
  }
  Tensor img = random_tensor({3, 32, 16}, rng, 0, 1);
  FeaturePyramid fp = bb.forward(img);

  std::vector<double> x = img.values();
  std::size_t c = 3, h = 32, w = 16;
  for (int s = 1; s <= 4; ++s) {
    const Tensor& k = params.at("stage" + std::to_string(s) + ".kernel");
    const Tensor& b = params.at("stage" + std::to_string(s) + ".bias");
    std::size_t cout = cfg.channels[s - 1], oh = 0, ow = 0;
    std::vector<double> pre = naive_conv(x, c, h, w, k.values(), cout, 3, 1, 1, oh, ow);
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < oh * ow; ++i) {
        double& v = pre[o * oh * ow + i];
        v = std::max(0.0, v + b.values()[o]);
      }
    if (s >= 3) {
      CHECK(fp.taps.at(s).shape() == Shape{cout, oh, ow});
      CHECK(max_abs_diff(fp.taps.at(s).values(), pre) < 1e-12);
    }
    x = pool_oracle(pre, cout, oh, ow, 2);
    c = cout;
    h = oh / 2;
    w = ow / 2;
  }
  CHECK(max_abs_diff(fp.final.values(), x) < 1e-12);
}

TEST_CASE("spatial size halves per stage and channels follow the config") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    BackboneConfig cfg;
    for (auto& ch : cfg.channels) ch = 1 + rng.below(6);
    cfg.height = 16 * (1 + rng.below(3));
    cfg.width = 16 * (1 + rng.below(3));
    Backbone bb(cfg, rng);
    FeaturePyramid fp = bb.forward(random_tensor({3, cfg.height, cfg.width}, rng, 0, 1));
    for (int s : {3, 4}) {
      CHECK(cfg.stage_height(s) == cfg.height >> (s - 1));
      CHECK(fp.taps.at(s).shape() ==
            Shape{cfg.channels[s - 1], cfg.height >> (s - 1), cfg.width >> (s - 1)});
    }
    CHECK(fp.final.shape() == Shape{cfg.channels[3], cfg.height / 16, cfg.width / 16});
  }
}

TEST_CASE("backbone rejects mismatched images and configs") {
  BackboneConfig cfg;
  Rng rng(5);
  Backbone bb(cfg, rng);
  CHECK_THROWS_AS(bb.forward(Tensor({3, 32, 32}, 0.0)), DimensionError);
  CHECK_THROWS_AS(bb.forward(Tensor({1, 64, 64}, 0.0)), DimensionError);
  BackboneConfig odd;
  odd.height = 40;
  CHECK_THROWS_AS(odd.validate(), ConfigError);
}

TEST_CASE("pooling absorbs a shift by one window") {
  Rng rng(6);
  Tensor k = random_tensor({2, 1, 3, 3}, rng);
  Tensor a({1, 12, 12}, 0.0), b({1, 12, 12}, 0.0);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      double v = rng.uniform();
      a.mutable_data()[(3 + y) * 12 + 3 + x] = v;
      b.mutable_data()[(5 + y) * 12 + 5 + x] = v;
    }
  Tensor pa = max_pool2d(relu(conv2d(a, k, 1, 1)), 2);
  Tensor pb = max_pool2d(relu(conv2d(b, k, 1, 1)), 2);
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t y = 0; y + 1 < 6; ++y)
      for (std::size_t x = 0; x + 1 < 6; ++x)
        CHECK(pb.at({ch, y + 1, x + 1}) == pa.at({ch, y, x}));
}

TEST_CASE("stage-4 output shifts by one cell for an interior pattern moved by pool^4 pixels") {
  BackboneConfig cfg;
  Rng rng(7);
  Backbone bb(cfg, rng);
  Tensor a({3, 64, 64}, 0.0), b({3, 64, 64}, 0.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        double v = rng.uniform();
        a.mutable_data()[(c * 64 + 24 + y) * 64 + 24 + x] = v;
        b.mutable_data()[(c * 64 + 40 + y) * 64 + 40 + x] = v;
      }
  Tensor fa = bb.forward(a).final, fb = bb.forward(b).final;
  double worst = 0.0;
  for (std::size_t ch = 0; ch < 64; ++ch)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 3; ++x)
        worst = std::max(worst, std::fabs(fb.at({ch, y + 1, x + 1}) - fa.at({ch, y, x})));
  CHECK(worst < 1e-12);
}
