#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "dsvit/checkpoint.hpp"
#include "dsvit/config.hpp"
#include "dsvit/dataset.hpp"
#include "dsvit/errors.hpp"
#include "dsvit/metrics.hpp"
#include "dsvit/motion.hpp"
#include "dsvit/text.hpp"
#include "dsvit/training.hpp"

namespace fs = std::filesystem;
using namespace dsvit;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigFailure = 2, kDiverged = 3, kIoFailure = 4 };

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.seed) cfg.train.seed = *g.seed;
  cfg.validate();
  return cfg;
}

std::string out_dir_or(const Globals& g, const std::string& fallback) {
  std::string dir = g.out_dir.empty() ? fallback : g.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  return dir;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ClassWeights weights_for(const RunConfig& cfg, const std::string& override_path) {
  std::string path = override_path.empty() ? cfg.eval.weights : override_path;
  return path.empty() ? uniform_weights() : read_class_weights(path);
}

// Trains one model and writes checkpoint.bin, losses.csv, config.txt and summary.txt.
TrainOutcome run_training(DualStreamModel& model, const RunConfig& cfg, const LoadedSplit& train,
                          const std::string& dir) {
  auto t0 = std::chrono::steady_clock::now();
  std::size_t steps_per_epoch = (train.samples.size() + cfg.train.batch_size - 1) / cfg.train.batch_size;
  std::size_t total = steps_per_epoch * cfg.train.epochs;
  std::printf("training on %zu samples: %zu epochs, %zu steps, alignment stages %s\n",
              train.samples.size(), cfg.train.epochs, total,
              format_alignment_stages(cfg.dual.alignment_stages).c_str());
  TrainOutcome outcome = train_model(model, train.samples, cfg, [&](const LossRecord& r) {
    if (r.step % 50 == 0 || r.step == total) {
      std::printf("step %5zu/%zu  total %.5f  rgb %.5f  optical %.5f  attention %.3g  alpha %.4f\n",
                  r.step, total, r.total_loss, r.rgb_loss, r.optical_loss, r.attention_loss,
                  model.alpha());
      std::fflush(stdout);
    }
  });
  save_checkpoint(join(dir, "checkpoint.bin"), model);
  write_losses_csv(join(dir, "losses.csv"), outcome.losses);
  write_text(join(dir, "config.txt"), cfg.to_text());

  std::string summary;
  summary += "config_hash=" + format_hash(cfg.model.hash()) + "\n";
  summary += "train_samples=" + std::to_string(train.samples.size()) + "\n";
  summary += "epochs=" + std::to_string(cfg.train.epochs) + "\n";
  summary += "steps=" + std::to_string(outcome.losses.size()) + "\n";
  summary += "alignment_stages=" + format_alignment_stages(cfg.dual.alignment_stages) + "\n";
  summary += "alpha_mode=" + to_string(cfg.alpha_mode) + "\n";
  summary += "final_alpha=" + format_exact(outcome.final_alpha) + "\n";
  if (!outcome.losses.empty()) {
    const LossRecord& first = outcome.losses.front();
    const LossRecord& last = outcome.losses.back();
    summary += "initial_total_loss=" + format_exact(first.total_loss) + "\n";
    summary += "final_total_loss=" + format_exact(last.total_loss) + "\n";
    summary += "final_rgb_loss=" + format_exact(last.rgb_loss) + "\n";
    summary += "final_optical_loss=" + format_exact(last.optical_loss) + "\n";
    summary += "final_attention_loss=" + format_exact(last.attention_loss) + "\n";
  }
  write_text(join(dir, "summary.txt"), summary);
  std::printf("trained in %.1f s; wrote %s\n", seconds_since(t0), dir.c_str());
  return outcome;
}

int cmd_gen_data(const Globals& g) {
  RunConfig cfg = resolve_config(g);
  std::string root = out_dir_or(g, cfg.data.root);
  auto t0 = std::chrono::steady_clock::now();
  DatasetManifest m = generate_dataset(cfg.data, root, cfg.train.seed);
  std::printf("generated %zu samples (%zu train, %zu val) in %s in %.1f s\n", m.entries.size(),
              cfg.data.train, cfg.data.val, root.c_str(), seconds_since(t0));
  return kOk;
}

int cmd_train(const Globals& g, const std::string& data_dir) {
  RunConfig cfg = resolve_config(g);
  std::string dir = out_dir_or(g, "run");
  DatasetManifest m = read_manifest(data_dir.empty() ? cfg.data.root : data_dir);
  LoadedSplit train = load_split(m, "train");
  DualStreamModel model(cfg.model, cfg.dual, cfg.train.seed);
  run_training(model, cfg, train, dir);
  return kOk;
}

MetricsReport evaluate_scores(const Matrix& scores, const LoadedSplit& split,
                              const ClassWeights& weights, double threshold) {
  return evaluate_metrics(scores, label_matrix(split.samples), weights, threshold);
}

int cmd_eval(const Globals& g, const std::string& data_dir, const std::string& checkpoint,
             const std::string& split_name, const std::string& weights_path) {
  RunConfig cfg = resolve_config(g);
  std::string dir = out_dir_or(g, "eval");
  DualStreamModel model(cfg.model, cfg.dual, cfg.train.seed);
  load_checkpoint(checkpoint, model);
  DatasetManifest m = read_manifest(data_dir.empty() ? cfg.data.root : data_dir);
  LoadedSplit split = load_split(m, split_name);
  Matrix scores = predict_rgb(model, split.samples);
  MetricsReport report = evaluate_scores(scores, split, weights_for(cfg, weights_path), cfg.eval.threshold);
  write_predictions_csv(join(dir, "predictions.csv"), split.ids, scores);
  write_labels_csv(join(dir, "labels.csv"), split.ids, label_matrix(split.samples));
  write_metrics_csv(join(dir, "metrics.csv"), report);
  std::string table = "RGB-only evaluation on the " + split_name + " split\n" + format_metrics_table(report);
  write_text(join(dir, "metrics.txt"), table);
  std::printf("%s", table.c_str());
  return kOk;
}

int cmd_ablate_alpha(const RunConfig& base, const DatasetManifest& m,
                     const std::string& dir, const std::string& checkpoint,
                     const ClassWeights& weights) {
  DualStreamModel model(base.model, base.dual, base.train.seed);
  if (checkpoint.empty()) {
    RunConfig cfg = base;
    cfg.alpha_mode = AlphaMode::learned;
    std::string sub = join(dir, "alpha_model");
    fs::create_directories(sub);
    run_training(model, cfg, load_split(m, "train"), sub);
  } else {
    load_checkpoint(checkpoint, model);
  }
  LoadedSplit val = load_split(m, "val");
  Matrix rgb = predict_rgb(model, val.samples);
  Matrix motion = predict_motion(model, val.samples);
  struct Row {
    std::string variant;
    double alpha;
  };
  std::vector<Row> rows{{"0", 0.0}, {"0.5", 0.5}, {"learned", model.alpha()}, {"1", 1.0}};
  std::string csv = "variant,alpha,f1_normal,f2_ciw\n";
  std::printf("%-8s %-8s %-10s %-10s\n", "variant", "alpha", "F1-Normal", "F2-CIW");
  for (const auto& row : rows) {
    MetricsReport r = evaluate_scores(fuse_matrix(rgb, motion, row.alpha), val, weights,
                                      base.eval.threshold);
    csv += row.variant + "," + format_exact(row.alpha) + "," + format_exact(r.f1_normal) + "," +
           format_exact(r.f2_ciw) + "\n";
    std::printf("%-8s %-8.4f %-10.4f %-10.4f\n", row.variant.c_str(), row.alpha, r.f1_normal, r.f2_ciw);
  }
  write_text(join(dir, "ablation_alpha.csv"), csv);
  return kOk;
}

int cmd_ablate_layers(const RunConfig& base, const DatasetManifest& m, const std::string& dir,
                      const ClassWeights& weights) {
  LoadedSplit train = load_split(m, "train");
  LoadedSplit val = load_split(m, "val");
  std::string csv = "alignment_stages,f1_normal,f2_ciw\n";
  std::vector<std::string> rows_out;
  for (const char* stages : {"3", "4", "3,4"}) {
    RunConfig cfg = base;
    cfg.dual.alignment_stages = parse_alignment_stages(stages);
    std::string label = stages == std::string("3,4") ? "3+4" : stages;
    std::string sub = join(dir, "stages_" + std::string(label == "3+4" ? "3_4" : label));
    fs::create_directories(sub);
    DualStreamModel model(cfg.model, cfg.dual, cfg.train.seed);
    run_training(model, cfg, train, sub);
    MetricsReport r = evaluate_scores(predict_rgb(model, val.samples), val, weights, cfg.eval.threshold);
    csv += label + "," + format_exact(r.f1_normal) + "," + format_exact(r.f2_ciw) + "\n";
    char line[128];
    std::snprintf(line, sizeof line, "%-8s %-10.4f %-10.4f\n", label.c_str(), r.f1_normal, r.f2_ciw);
    rows_out.push_back(line);
  }
  write_text(join(dir, "ablation_attn_layer.csv"), csv);
  std::printf("%-8s %-10s %-10s\n", "stages", "F1-Normal", "F2-CIW");
  for (const auto& line : rows_out) std::printf("%s", line.c_str());
  return kOk;
}

int cmd_ablate(const Globals& g, const std::string& axis, const std::string& data_dir,
               const std::string& checkpoint, const std::string& weights_path) {
  RunConfig cfg = resolve_config(g);
  std::string dir = out_dir_or(g, "ablation");
  DatasetManifest m = read_manifest(data_dir.empty() ? cfg.data.root : data_dir);
  ClassWeights weights = weights_for(cfg, weights_path);
  if (axis == "alpha") return cmd_ablate_alpha(cfg, m, dir, checkpoint, weights);
  if (!checkpoint.empty()) throw ConfigError("--checkpoint applies to --axis alpha only");
  return cmd_ablate_layers(cfg, m, dir, weights);
}

int cmd_encode_flow(const std::string& input, const std::string& output,
                    std::optional<double> m_max) {
  FlowField flow = read_flow(input);
  MotionImage img = encode_flow_image(flow, m_max);
  write_png(output, img.image);
  std::printf("%s -> %s (%zux%zu, m_max %s)\n", input.c_str(), output.c_str(), flow.width,
              flow.height, format_exact(img.m_max).c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-stream multi-scale hybrid ViT: synthetic data, training, evaluation, ablations"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Run config file (key=value lines)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Overrides train.seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");

  std::string data_dir, checkpoint, split = "val", weights, axis, input, output;
  double m_max = 0.0;

  auto* gen = app.add_subcommand("gen-data", "Generate the paired synthetic dataset");
  auto* train = app.add_subcommand("train", "Train both streams jointly");
  train->add_option("--data", data_dir, "Dataset root (default data.root)");
  auto* eval = app.add_subcommand("eval", "RGB-only evaluation of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Dataset root (default data.root)");
  eval->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));
  eval->add_option("--weights", weights, "class,weight CSV (default uniform)");
  auto* ablate = app.add_subcommand("ablate", "Fusion-weight or alignment-layer ablation");
  ablate->add_option("--axis", axis, "alpha or attn-layer")->required()->check(CLI::IsMember({"alpha", "attn-layer"}));
  ablate->add_option("--data", data_dir, "Dataset root (default data.root)");
  ablate->add_option("--checkpoint", checkpoint, "Reuse a trained model (alpha axis only)");
  ablate->add_option("--weights", weights, "class,weight CSV (default uniform)");
  auto* encode = app.add_subcommand("encode-flow", "Encode a .dsfl flow file as a motion PNG");
  encode->add_option("--input", input, "Flow file")->required();
  encode->add_option("--output", output, "PNG to write")->required();
  auto* mmax_opt = encode->add_option("--m-max", m_max, "Fixed M_max instead of the per-image maximum");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (*gen) return cmd_gen_data(g);
    if (*train) return cmd_train(g, data_dir);
    if (*eval) return cmd_eval(g, data_dir, checkpoint, split, weights);
    if (*ablate) return cmd_ablate(g, axis, data_dir, checkpoint, weights);
    if (*encode) {
      return cmd_encode_flow(input, output, mmax_opt->count() ? std::optional<double>(m_max) : std::nullopt);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigFailure;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kDiverged;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kIoFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
