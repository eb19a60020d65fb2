#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "dsvit/checkpoint.hpp"
#include "dsvit/config.hpp"
#include "dsvit/dataset.hpp"
#include "dsvit/errors.hpp"
#include "dsvit/image_io.hpp"
#include "dsvit/metrics.hpp"
#include "dsvit/motion.hpp"
#include "dsvit/training.hpp"
#include "support.hpp"

using namespace dsvit;
using dsvit::test::TempDir;
using dsvit::test::random_sample;
using dsvit::test::tiny_model_config;

namespace fs = std::filesystem;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Every file under `root` keyed by relative path.
std::vector<std::pair<std::string, std::string>> tree_bytes(const std::string& root) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    out.emplace_back(fs::relative(e.path(), root).string(), read_bytes(e.path().string()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

RunConfig small_run_config() {
  RunConfig cfg;
  cfg.model = tiny_model_config();
  cfg.data.height = 16;
  cfg.data.width = 16;
  cfg.data.train = 8;
  cfg.data.val = 4;
  cfg.train.batch_size = 2;
  cfg.train.epochs = 1;
  return cfg;
}

std::string config_error(const std::string& text) {
  try {
    parse_run_config(text, "run.cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

/// Marginal class rates after rejecting label vectors with more than `cap`
/// positives, by enumerating all 32 vectors.
std::array<double, 5> rejected_marginals(const std::array<double, 5>& rates, std::size_t cap) {
  std::array<double, 5> num{};
  double kept = 0.0;
  for (unsigned bits = 0; bits < 32; ++bits) {
    double p = 1.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      bool on = (bits >> c) & 1u;
      p *= on ? rates[c] : 1.0 - rates[c];
      count += on;
    }
    if (count > cap) continue;
    kept += p;
    for (std::size_t c = 0; c < 5; ++c)
      if ((bits >> c) & 1u) num[c] += p;
  }
  for (auto& v : num) v /= kept;
  return num;
}

int run_cli(const std::string& args, const std::string& log) {
  std::string cmd = std::string(DSVIT_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("run config defaults and parsing") {
  RunConfig def = parse_run_config("");
  CHECK(def.train.epochs == 5);
  CHECK(def.train.seed == 42);
  CHECK(def.data.train == 2000);
  CHECK(def.data.val == 500);
  CHECK(def.model.backbone.height == 64);
  CHECK(def.alpha_mode == AlphaMode::learned);
  CHECK(def.dual.alignment_stages == std::vector<int>{3});

  RunConfig cfg = parse_run_config(
      "# comment\n"
      "encoder.depth = 3   # trailing\n"
      "\n"
      "train.lr=0.01\n"
      "dual.alignment_stages=3,4\n"
      "data.height=32\n"
      "data.width=32\n"
      "ablation.alpha_mode=0.5\n");
  CHECK(cfg.model.encoder.depth == 3);
  CHECK(cfg.train.lr == 0.01);
  CHECK(cfg.dual.alignment_stages == std::vector<int>{3, 4});
  CHECK(cfg.model.backbone.height == 32);
  CHECK(cfg.alpha_mode == AlphaMode::fixed_half);

  CHECK(parse_run_config("dual.alignment_stages=none").dual.alignment_stages.empty());
  CHECK(format_alignment_stages({}) == "none");
  CHECK(format_alignment_stages({3, 4}) == "3,4");
  CHECK(parse_alignment_stages("4") == std::vector<int>{4});
  CHECK_THROWS_AS(parse_alignment_stages("2"), ConfigError);
  CHECK_THROWS_AS(parse_alignment_stages("3,3"), ConfigError);

  for (auto m : {AlphaMode::fixed0, AlphaMode::fixed_half, AlphaMode::fixed1, AlphaMode::learned})
    CHECK(parse_alpha_mode(to_string(m)) == m);
  CHECK(initial_alpha(AlphaMode::fixed0) == 0.0);
  CHECK(initial_alpha(AlphaMode::fixed1) == 1.0);
  CHECK(initial_alpha(AlphaMode::learned) == 0.5);
  CHECK_THROWS_AS(parse_alpha_mode("0.7"), ConfigError);
}

TEST_CASE("config errors name the source, line and key") {
  std::string bad_value = config_error("train.lr=0.1\nencoder.depth=two\n");
  CHECK(bad_value.find("run.cfg:2") != std::string::npos);
  CHECK(bad_value.find("encoder.depth") != std::string::npos);

  std::string unknown = config_error("\n\nencoder.width=3\n");
  CHECK(unknown.find("run.cfg:3") != std::string::npos);
  CHECK(unknown.find("encoder.width") != std::string::npos);

  std::string no_equals = config_error("train.lr\n");
  CHECK(no_equals.find("run.cfg:1") != std::string::npos);

  CHECK(config_error("data.class_rates=0.1,0.2\n").find("data.class_rates") != std::string::npos);
  CHECK(config_error("train.batch_size=0\n").find("train.batch_size") != std::string::npos);
  CHECK(config_error("model.num_classes=4\n").find("model.num_classes") != std::string::npos);
  CHECK(config_error("eval.threshold=1\n").find("eval.threshold") != std::string::npos);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.cfg"), IoError);
}

TEST_CASE("config text round trips through the parser") {
  RunConfig cfg = small_run_config();
  cfg.model.encoder.norm = false;
  cfg.dual.alignment_stages = {3, 4};
  cfg.dual.attention_weight = 2.5;
  cfg.train.lr = 0.1 / 3.0;
  cfg.train.seed = 18446744073709551557ull;
  cfg.alpha_mode = AlphaMode::fixed0;
  cfg.eval.weights = "w.csv";
  cfg.data.class_rates = {0.1, 0.2, 0.3, 0.4, 1.0 / 7.0};
  RunConfig back = parse_run_config(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.model.hash() == cfg.model.hash());
  CHECK(back.train.lr == cfg.train.lr);
  CHECK(back.train.seed == cfg.train.seed);
  CHECK(back.data.class_rates == cfg.data.class_rates);
  CHECK(back.dual.alignment_stages == cfg.dual.alignment_stages);
}

TEST_CASE("dataset generation is byte-deterministic") {
  TempDir a("gen_a"), b("gen_b");
  RunConfig cfg = small_run_config();
  cfg.data.height = 32;
  cfg.data.width = 32;
  DatasetManifest ma = generate_dataset(cfg.data, a.file("data"), 7);
  generate_dataset(cfg.data, b.file("data"), 7);
  CHECK(ma.entries.size() == 12);
  auto ta = tree_bytes(a.file("data")), tb = tree_bytes(b.file("data"));
  CHECK(ta.size() == 12 * 3 + 1);
  CHECK(ta == tb);

  TempDir c("gen_c");
  generate_dataset(cfg.data, c.file("data"), 8);
  CHECK(tree_bytes(c.file("data")) != ta);

  CHECK(fs::exists(a.file("data/train/rgb/00000.png")));
  CHECK(fs::exists(a.file("data/val/motion/00011.png")));
  CHECK(fs::exists(a.file("data/val/flow/00008.dsfl")));
  std::string manifest = read_bytes(a.file("data/manifest.csv"));
  CHECK(manifest.rfind("id,split,DE,FS,AF,GR,OK,m_max\n", 0) == 0);
  CHECK(ma.split_indices("train").size() == 8);
  CHECK(ma.split_indices("val").size() == 4);
}

TEST_CASE("samples without positive classes draw no glyphs") {
  DataConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  cfg.class_rates = {0, 0, 0, 0, 0};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSample s = synthesize_sample(cfg, seed);
    CHECK(s.labels == LabelVector{0, 0, 0, 0, 0});
  }
  cfg.class_rates = {1, 0, 0, 0, 0};
  CHECK(synthesize_sample(cfg, 1).labels == LabelVector{1, 0, 0, 0, 0});
  DataConfig none = cfg;
  none.class_rates = {0, 0, 0, 0, 0};
  CHECK(synthesize_sample(cfg, 1).rgb.pixels != synthesize_sample(none, 1).rgb.pixels);
}

TEST_CASE("label marginals follow the configured class rates") {
  DataConfig cfg;
  std::array<double, 5> expect = rejected_marginals(cfg.class_rates, cfg.max_glyphs);
  std::array<double, 5> counts{};
  Rng rng(9);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    LabelVector y = sample_labels(cfg, rng);
    std::size_t on = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      counts[c] += y[c];
      on += static_cast<std::size_t>(y[c]);
    }
    CHECK(on <= cfg.max_glyphs);
  }
  for (std::size_t c = 0; c < 5; ++c) {
    double freq = counts[c] / n;
    CAPTURE(c);
    CHECK(std::fabs(freq - cfg.class_rates[c]) < 0.02);
    CHECK(std::fabs(freq - expect[c]) < 0.02);
  }
}

TEST_CASE("load_pair reproduces stored pixels and the stored flow") {
  TempDir dir("pairs");
  RunConfig cfg = small_run_config();
  cfg.data.height = 32;
  cfg.data.width = 32;
  DatasetManifest m = generate_dataset(cfg.data, dir.file("data"), 3);
  DatasetManifest back = read_manifest(dir.file("data"));
  REQUIRE(back.entries.size() == m.entries.size());
  validate_manifest(back);

  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    const ManifestEntry& e = back.entries[i];
    CHECK(e.id == m.entries[i].id);
    CHECK(e.labels == m.entries[i].labels);
    CHECK(e.m_max == m.entries[i].m_max);
    Sample s = load_pair(back, i);
    RgbImage rgb = read_png(back.rgb_path(e)), motion = read_png(back.motion_path(e));
    CHECK(s.rgb.shape() == Shape{3, 32, 32});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          CHECK(s.rgb.at({c, y, x}) == rgb.at(y, x, c) / 255.0);
          CHECK(s.motion.at({c, y, x}) == motion.at(y, x, c) / 255.0);
        }
    for (std::size_t c = 0; c < 5; ++c) CHECK(s.labels.values()[c] == e.labels[c]);

    FlowField flow = read_flow(back.flow_path(e));
    MotionImage re = encode_flow_image(flow);
    CHECK(re.image.pixels == motion.pixels);
    CHECK(re.m_max == e.m_max);

    FlowField decoded = decode_motion_image(motion, e.m_max);
    double step = 2.0 * e.m_max / 255.0;
    for (std::size_t k = 0; k < flow.dx.size(); ++k) {
      CHECK(std::fabs(decoded.dx[k] - flow.dx[k]) <= step);
      CHECK(std::fabs(decoded.dy[k] - flow.dy[k]) <= step);
    }
  }
  CHECK_THROWS_AS(load_pair(back, back.entries.size()), ContractError);

  fs::remove(back.motion_path(back.entries[2]));
  try {
    load_pair(back, 2);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(back.entries[2].id) != std::string::npos);
  }
  CHECK_THROWS_AS(validate_manifest(back), IoError);
}

TEST_CASE("synthetic sample flows are consistent with their motion images") {
  DataConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticSample s = synthesize_sample(cfg, seed);
    CHECK(s.rgb.height == cfg.height);
    CHECK(s.motion.image.width == cfg.width);
    CHECK(quantize_to_float(s.flow).dx == s.flow.dx);
    MotionImage re = encode_flow_image(s.flow);
    CHECK(re.image.pixels == s.motion.image.pixels);
    CHECK(s.flow.max_abs_component() <= cfg.max_displacement);
  }
}

TEST_CASE("checkpoints round trip and refuse a different architecture") {
  TempDir dir("ckpt");
  DualStreamModel model(tiny_model_config(), DualStreamConfig{}, 21);
  model.set_alpha(0.8194);
  Rng rng(21);
  Sample s = random_sample(model.model_config(), rng);
  std::vector<double> before = model.infer_rgb(s.rgb), motion_before = model.infer_motion(s.motion);
  save_checkpoint(dir.file("a.bin"), model);
  CHECK(read_checkpoint_hash(dir.file("a.bin")) == model.model_config().hash());

  DualStreamModel other(tiny_model_config(), DualStreamConfig{}, 99);
  CHECK(other.infer_rgb(s.rgb) != before);
  load_checkpoint(dir.file("a.bin"), other);
  CHECK(other.infer_rgb(s.rgb) == before);
  CHECK(other.infer_motion(s.motion) == motion_before);
  CHECK(other.alpha() == 0.8194);
  save_checkpoint(dir.file("b.bin"), other);
  CHECK(read_bytes(dir.file("a.bin")) == read_bytes(dir.file("b.bin")));

  ModelConfig wider = tiny_model_config();
  wider.encoder.dim = 6;
  DualStreamModel mismatch(wider, DualStreamConfig{}, 21);
  try {
    load_checkpoint(dir.file("a.bin"), mismatch);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find(format_hash(model.model_config().hash())) != std::string::npos);
    CHECK(msg.find(format_hash(wider.hash())) != std::string::npos);
  }

  std::string bytes = read_bytes(dir.file("a.bin"));
  std::ofstream(dir.file("short.bin"), std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(dir.file("short.bin"), other), IoError);
  std::ofstream(dir.file("junk.bin"), std::ios::binary) << "XXXX" << bytes.substr(4);
  CHECK_THROWS_AS(load_checkpoint(dir.file("junk.bin"), other), IoError);
  CHECK_THROWS_AS(load_checkpoint(dir.file("missing.bin"), other), IoError);
}

TEST_CASE("epoch order is a seeded permutation") {
  for (std::size_t n : {1u, 2u, 7u, 100u}) {
    std::vector<std::size_t> a = epoch_order(n, 42, 0);
    std::vector<std::size_t> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);
    CHECK(epoch_order(n, 42, 0) == a);
  }
  CHECK(epoch_order(100, 42, 0) != epoch_order(100, 42, 1));
  CHECK(epoch_order(100, 42, 0) != epoch_order(100, 43, 0));
  CHECK(epoch_order(0, 42, 0).empty());
}

TEST_CASE("train_model step counts, alpha modes and zero epochs") {
  RunConfig cfg = small_run_config();
  Rng rng(30);
  std::vector<Sample> data;
  for (int i = 0; i < 5; ++i) data.push_back(random_sample(cfg.model, rng));

  DualStreamModel untouched(cfg.model, cfg.dual, 30);
  cfg.train.epochs = 0;
  std::vector<double> before;
  for (const Tensor& t : untouched.parameters()) before.insert(before.end(), t.values().begin(), t.values().end());
  TrainOutcome none = train_model(untouched, data, cfg);
  CHECK(none.losses.empty());
  std::vector<double> after;
  for (const Tensor& t : untouched.parameters()) after.insert(after.end(), t.values().begin(), t.values().end());
  CHECK(after == before);

  cfg.train.epochs = 2;
  DualStreamModel learned(cfg.model, cfg.dual, 30);
  std::size_t callbacks = 0;
  TrainOutcome out = train_model(learned, data, cfg, [&](const LossRecord&) { ++callbacks; });
  CHECK(out.losses.size() == 6);
  CHECK(callbacks == 6);
  for (std::size_t i = 0; i < out.losses.size(); ++i) CHECK(out.losses[i].step == i + 1);
  CHECK(out.final_alpha == learned.alpha());
  CHECK(out.final_alpha != 0.5);

  for (auto mode : {AlphaMode::fixed0, AlphaMode::fixed_half, AlphaMode::fixed1}) {
    cfg.alpha_mode = mode;
    DualStreamModel m(cfg.model, cfg.dual, 30);
    CHECK(train_model(m, data, cfg).final_alpha == initial_alpha(mode));
  }

  cfg.alpha_mode = AlphaMode::learned;
  DualStreamModel again(cfg.model, cfg.dual, 30);
  TrainOutcome repeat = train_model(again, data, cfg);
  for (std::size_t i = 0; i < out.losses.size(); ++i) CHECK(repeat.losses[i].total_loss == out.losses[i].total_loss);
}

TEST_CASE("losses CSV round trips exactly") {
  TempDir dir("losses");
  Rng rng(31);
  std::vector<LossRecord> rows;
  for (std::size_t step = 1; step <= 20; ++step) {
    LossRecord r;
    r.step = step;
    r.attention_loss = rng.uniform(0, 1e-3) / 3.0;
    r.optical_loss = rng.uniform();
    r.rgb_loss = rng.uniform();
    r.total_loss = r.attention_loss + r.optical_loss + r.rgb_loss;
    rows.push_back(r);
  }
  write_losses_csv(dir.file("losses.csv"), rows);
  std::string text = read_bytes(dir.file("losses.csv"));
  CHECK(text.rfind(std::string(kLossHeader) + "\n", 0) == 0);
  std::vector<LossRecord> back = read_losses_csv(dir.file("losses.csv"));
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].step == rows[i].step);
    CHECK(back[i].attention_loss == rows[i].attention_loss);
    CHECK(back[i].optical_loss == rows[i].optical_loss);
    CHECK(back[i].rgb_loss == rows[i].rgb_loss);
    CHECK(back[i].total_loss == rows[i].total_loss);
  }
  write_losses_csv(dir.file("empty.csv"), {});
  CHECK(read_bytes(dir.file("empty.csv")) == std::string(kLossHeader) + "\n");
  CHECK(read_losses_csv(dir.file("empty.csv")).empty());
}

TEST_CASE("fused score matrices") {
  Matrix r{{0.2, 0.9}, {0.4, 0.1}}, o{{0.6, 0.1}, {0.0, 1.0}};
  CHECK(fuse_matrix(r, o, 1.0) == r);
  CHECK(fuse_matrix(r, o, 0.0) == o);
  Matrix half = fuse_matrix(r, o, 0.5);
  CHECK(half[0][0] == doctest::Approx(0.4));
  CHECK(half[1][1] == doctest::Approx(0.55));
  CHECK_THROWS_AS(fuse_matrix(r, Matrix{{0.1, 0.2}}, 0.5), DimensionError);
}

TEST_CASE("an untrained model scores near chance for the label distribution") {
  DataConfig data;
  ModelConfig mc;
  DualStreamModel model(mc, DualStreamConfig{}, 5);
  std::vector<Sample> val;
  for (std::uint64_t i = 0; i < 200; ++i) {
    SyntheticSample s = synthesize_sample(data, derive_seed(1234, i));
    Tensor labels(Shape{5}, 0.0);
    for (std::size_t c = 0; c < 5; ++c) labels.mutable_data()[c] = s.labels[c];
    val.push_back({to_tensor(s.rgb), to_tensor(s.motion.image), labels});
  }
  Matrix labels = label_matrix(val);
  AveragePrecision ap = mean_average_precision(predict_rgb(model, val), labels);
  double prevalence = 0.0;
  for (const auto& row : labels)
    for (double v : row) prevalence += v;
  prevalence /= static_cast<double>(labels.size() * 5);
  // A ranking unrelated to the labels has expected AP close to the prevalence.
  CHECK(std::fabs(ap.mean - prevalence) < 0.1);
}

TEST_CASE("a tiny memorized set is classified almost perfectly") {
  RunConfig cfg = small_run_config();
  cfg.model.backbone.channels = {4, 8, 8, 8};
  cfg.model.encoder.dim = 8;
  cfg.model.encoder.ffn_dim = 16;
  cfg.train.epochs = 500;
  cfg.train.batch_size = 4;
  cfg.train.lr = 0.1;
  cfg.dual.alignment_stages = {};
  Rng rng(40);
  std::vector<Sample> data;
  for (int i = 0; i < 8; ++i) {
    Sample s = random_sample(cfg.model, rng);
    for (std::size_t c = 0; c < 5; ++c) s.labels.mutable_data()[c] = (i >> (c % 3)) & 1;
    data.push_back(s);
  }
  DualStreamModel model(cfg.model, cfg.dual, 40);
  train_model(model, data, cfg);
  MetricsReport r = evaluate_metrics(predict_rgb(model, data), label_matrix(data), uniform_weights(), 0.5);
  CHECK(r.f2_ciw > 0.95);
  CHECK(r.map > 0.95);
}

TEST_CASE("CLI reports config errors and missing inputs with distinct exit codes") {
  TempDir dir("cli");
  std::ofstream(dir.file("bad.cfg")) << "train.epochs=2\nencoder.depth=deep\n";
  CHECK(run_cli("--config " + dir.file("bad.cfg") + " train", dir.file("log1")) == 2);
  std::string log = read_bytes(dir.file("log1"));
  CHECK(log.find("bad.cfg:2") != std::string::npos);
  CHECK(log.find("encoder.depth") != std::string::npos);

  CHECK(run_cli("train --data " + dir.file("nowhere") + " --out-dir " + dir.file("run"), dir.file("log2")) == 4);
  CHECK(run_cli("frobnicate", dir.file("log3")) != 0);
}

TEST_CASE("CLI encode-flow writes the encoded motion image") {
  TempDir dir("cli_flow");
  FlowField f(4, 6);
  std::fill(f.dx.begin(), f.dx.end(), 1.0);
  write_flow(dir.file("f.dsfl"), f);
  REQUIRE(run_cli("encode-flow --input " + dir.file("f.dsfl") + " --output " + dir.file("m.png"),
                  dir.file("log")) == 0);
  RgbImage img = read_png(dir.file("m.png"));
  CHECK(img.pixels == encode_flow_image(f).image.pixels);
  CHECK(img.at(0, 0, 0) == 255);
}

TEST_CASE("CLI zero-epoch training writes a header-only loss file and initial weights") {
  TempDir dir("cli_train");
  std::ofstream(dir.file("run.cfg")) << small_run_config().to_text() << "train.epochs=0\n";
  REQUIRE(run_cli("--config " + dir.file("run.cfg") + " --out-dir " + dir.file("data") + " gen-data",
                  dir.file("log1")) == 0);
  REQUIRE(run_cli("--config " + dir.file("run.cfg") + " --out-dir " + dir.file("run") + " train --data " +
                      dir.file("data"),
                  dir.file("log2")) == 0);
  CHECK(read_bytes(dir.file("run/losses.csv")) == std::string(kLossHeader) + "\n");

  RunConfig cfg = load_run_config(dir.file("run.cfg"));
  DualStreamModel fresh(cfg.model, cfg.dual, cfg.train.seed), loaded(cfg.model, cfg.dual, 1);
  load_checkpoint(dir.file("run/checkpoint.bin"), loaded);
  Sample s = load_pair(read_manifest(dir.file("data")), 0);
  CHECK(loaded.infer_rgb(s.rgb) == fresh.infer_rgb(s.rgb));

  REQUIRE(run_cli("--config " + dir.file("run.cfg") + " --out-dir " + dir.file("eval") + " eval --data " +
                      dir.file("data") + " --checkpoint " + dir.file("run/checkpoint.bin"),
                  dir.file("log3")) == 0);
  LoadedSplit val = load_split(read_manifest(dir.file("data")), "val");
  LongTable scores = read_long_csv(dir.file("eval/predictions.csv"), "score");
  CHECK(scores.ids == val.ids);
  MetricsReport expect = evaluate_metrics(scores.values, label_matrix(val.samples), uniform_weights(), 0.5);
  CHECK(read_bytes(dir.file("eval/metrics.csv")) == [&] {
    TempDir tmp("cli_metrics");
    write_metrics_csv(tmp.file("m.csv"), expect);
    return read_bytes(tmp.file("m.csv"));
  }());
}
