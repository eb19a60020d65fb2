#include "dsvit/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dsvit/errors.hpp"
#include "dsvit/text.hpp"

namespace dsvit {

AlphaMode parse_alpha_mode(const std::string& text) {
  if (text == "0" || text == "fixed-0") return AlphaMode::fixed0;
  if (text == "0.5" || text == "fixed-0.5") return AlphaMode::fixed_half;
  if (text == "1" || text == "fixed-1") return AlphaMode::fixed1;
  if (text == "learned") return AlphaMode::learned;
  throw ConfigError("unknown alpha mode '" + text + "' (expected 0, 0.5, 1 or learned)");
}

std::string to_string(AlphaMode mode) {
  switch (mode) {
    case AlphaMode::fixed0: return "0";
    case AlphaMode::fixed_half: return "0.5";
    case AlphaMode::fixed1: return "1";
    case AlphaMode::learned: return "learned";
  }
  return "?";
}

double initial_alpha(AlphaMode mode) {
  switch (mode) {
    case AlphaMode::fixed0: return 0.0;
    case AlphaMode::fixed1: return 1.0;
    default: return 0.5;
  }
}

std::vector<int> parse_alignment_stages(const std::string& text) {
  std::string t = trim(text);
  if (t == "none" || t.empty()) return {};
  std::vector<int> stages;
  for (const auto& f : split_fields(t)) {
    if (f == "3") stages.push_back(3);
    else if (f == "4") stages.push_back(4);
    else throw ConfigError("alignment stage '" + f + "' is not 3 or 4");
  }
  std::vector<int> sorted = stages;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("alignment stages repeat in '" + t + "'");
  }
  return sorted;
}

std::string format_alignment_stages(const std::vector<int>& stages) {
  if (stages.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(stages[i]);
  }
  return out;
}

namespace {

std::size_t as_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  if (!parse_size(v, out)) throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return out;
}

double as_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  if (!parse_double(v, out)) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["backbone.channels"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      auto f = split_fields(v);
      if (f.size() != kNumStages) throw ConfigError(k + ": expected 4 comma-separated widths");
      for (std::size_t i = 0; i < f.size(); ++i) c.model.backbone.channels[i] = as_size(k, f[i]);
    };
    t["backbone.kernel"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.backbone.kernel = as_size(k, v);
    };
    t["backbone.pool"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.backbone.pool = as_size(k, v);
    };
    t["tokenizer.kind"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "sinkhorn") c.model.tokenizer.kind = TokenizerKind::sinkhorn;
      else if (v == "patch") c.model.tokenizer.kind = TokenizerKind::patch;
      else throw ConfigError(k + ": expected sinkhorn or patch, got '" + v + "'");
    };
    t["tokenizer.patch"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.tokenizer.patch = as_size(k, v);
    };
    t["tokenizer.clusters_stage3"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.tokenizer.clusters_stage3 = as_size(k, v);
    };
    t["tokenizer.clusters_stage4"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.tokenizer.clusters_stage4 = as_size(k, v);
    };
    t["tokenizer.epsilon"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.tokenizer.epsilon = as_double(k, v);
    };
    t["tokenizer.iterations"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.tokenizer.iterations = as_size(k, v);
    };
    t["encoder.depth"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.encoder.depth = as_size(k, v);
    };
    t["encoder.heads"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.encoder.heads = as_size(k, v);
    };
    t["encoder.dim"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.encoder.dim = as_size(k, v);
    };
    t["encoder.ffn_dim"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.encoder.ffn_dim = as_size(k, v);
    };
    t["encoder.cross_scale"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      try {
        c.model.encoder.cross_scale = parse_cross_scale_mode(v);
      } catch (const ConfigError& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
    t["encoder.norm"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.encoder.norm = as_bool(k, v);
    };
    t["model.num_classes"] = [](RunConfig&, const std::string& k, const std::string& v) {
      if (as_size(k, v) != 5) throw ConfigError(k + ": the label vocabulary has exactly 5 classes");
    };
    t["dual.alignment_stages"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      try {
        c.dual.alignment_stages = parse_alignment_stages(v);
      } catch (const ConfigError& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
    t["dual.rgb_weight"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.dual.rgb_weight = as_double(k, v);
    };
    t["dual.optical_weight"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.dual.optical_weight = as_double(k, v);
    };
    t["dual.attention_weight"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.dual.attention_weight = as_double(k, v);
    };
    t["dual.stop_motion_gradient"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.dual.stop_motion_gradient = as_bool(k, v);
    };
    t["data.root"] = [](RunConfig& c, const std::string&, const std::string& v) { c.data.root = v; };
    t["data.train"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.data.train = as_size(k, v);
    };
    t["data.val"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.data.val = as_size(k, v);
    };
    t["data.height"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.data.height = as_size(k, v);
    };
    t["data.width"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.data.width = as_size(k, v);
    };
    t["data.max_displacement"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.data.max_displacement = as_double(k, v);
    };
    t["data.class_rates"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      auto f = split_fields(v);
      if (f.size() != 5) throw ConfigError(k + ": expected 5 comma-separated rates");
      for (std::size_t i = 0; i < 5; ++i) c.data.class_rates[i] = as_double(k, f[i]);
    };
    t["data.max_glyphs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.data.max_glyphs = as_size(k, v);
    };
    t["train.epochs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.epochs = as_size(k, v);
    };
    t["train.batch_size"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.batch_size = as_size(k, v);
    };
    t["train.lr"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.lr = as_double(k, v);
    };
    t["train.alpha_lr"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.alpha_lr = as_double(k, v);
    };
    t["train.seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      std::size_t s = 0;
      if (!parse_size(v, s)) throw ConfigError(k + ": expected an unsigned integer, got '" + v + "'");
      c.train.seed = s;
    };
    t["eval.weights"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.eval.weights = v;
    };
    t["eval.threshold"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.eval.threshold = as_double(k, v);
    };
    t["ablation.alpha_mode"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      try {
        c.alpha_mode = parse_alpha_mode(v);
      } catch (const ConfigError& e) {
        throw ConfigError(k + ": " + e.what());
      }
    };
    return t;
  }();
  return table;
}

}  // namespace

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown key '" + key + "'");
  it->second(cfg, key, value);
  cfg.model.backbone.height = cfg.data.height;
  cfg.model.backbone.width = cfg.data.width;
}

void RunConfig::validate() const {
  model.validate();
  dual.validate();
  if (data.train + data.val < 10) throw ConfigError("data.train + data.val must be at least 10");
  if (!(data.max_displacement > 0.0)) throw ConfigError("data.max_displacement must be positive");
  for (double r : data.class_rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("data.class_rates entries must lie in [0, 1]");
  }
  if (data.max_glyphs > 5) throw ConfigError("data.max_glyphs cannot exceed the 5 classes");
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(train.lr >= 0.0)) throw ConfigError("train.lr must be nonnegative");
  if (!(train.alpha_lr >= 0.0)) throw ConfigError("train.alpha_lr must be nonnegative");
  if (!(eval.threshold > 0.0 && eval.threshold < 1.0)) {
    throw ConfigError("eval.threshold must lie in (0, 1)");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  const auto& b = model.backbone;
  out << "backbone.channels=" << b.channels[0] << "," << b.channels[1] << "," << b.channels[2]
      << "," << b.channels[3] << "\n";
  out << "backbone.kernel=" << b.kernel << "\n";
  out << "backbone.pool=" << b.pool << "\n";
  const auto& t = model.tokenizer;
  out << "tokenizer.kind=" << (t.kind == TokenizerKind::sinkhorn ? "sinkhorn" : "patch") << "\n";
  out << "tokenizer.patch=" << t.patch << "\n";
  out << "tokenizer.clusters_stage3=" << t.clusters_stage3 << "\n";
  out << "tokenizer.clusters_stage4=" << t.clusters_stage4 << "\n";
  out << "tokenizer.epsilon=" << format_exact(t.epsilon) << "\n";
  out << "tokenizer.iterations=" << t.iterations << "\n";
  const auto& e = model.encoder;
  out << "encoder.depth=" << e.depth << "\n";
  out << "encoder.heads=" << e.heads << "\n";
  out << "encoder.dim=" << e.dim << "\n";
  out << "encoder.ffn_dim=" << e.ffn_dim << "\n";
  out << "encoder.cross_scale=" << to_string(e.cross_scale) << "\n";
  out << "encoder.norm=" << (e.norm ? "true" : "false") << "\n";
  out << "model.num_classes=" << model.num_classes << "\n";
  out << "dual.alignment_stages=" << format_alignment_stages(dual.alignment_stages) << "\n";
  out << "dual.rgb_weight=" << format_exact(dual.rgb_weight) << "\n";
  out << "dual.optical_weight=" << format_exact(dual.optical_weight) << "\n";
  out << "dual.attention_weight=" << format_exact(dual.attention_weight) << "\n";
  out << "dual.stop_motion_gradient=" << (dual.stop_motion_gradient ? "true" : "false") << "\n";
  out << "data.root=" << data.root << "\n";
  out << "data.train=" << data.train << "\n";
  out << "data.val=" << data.val << "\n";
  out << "data.height=" << data.height << "\n";
  out << "data.width=" << data.width << "\n";
  out << "data.max_displacement=" << format_exact(data.max_displacement) << "\n";
  out << "data.class_rates=";
  for (std::size_t i = 0; i < data.class_rates.size(); ++i) {
    out << (i ? "," : "") << format_exact(data.class_rates[i]);
  }
  out << "\n";
  out << "data.max_glyphs=" << data.max_glyphs << "\n";
  out << "train.epochs=" << train.epochs << "\n";
  out << "train.batch_size=" << train.batch_size << "\n";
  out << "train.lr=" << format_exact(train.lr) << "\n";
  out << "train.alpha_lr=" << format_exact(train.alpha_lr) << "\n";
  out << "train.seed=" << train.seed << "\n";
  out << "eval.weights=" << eval.weights << "\n";
  out << "eval.threshold=" << format_exact(eval.threshold) << "\n";
  out << "ablation.alpha_mode=" << to_string(alpha_mode) << "\n";
  return out.str();
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    std::string where = source + ":" + std::to_string(lineno);
    std::size_t eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + body + "'");
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    try {
      apply_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path);
}

}  // namespace dsvit
