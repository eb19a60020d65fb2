#include "dsvit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dsvit/errors.hpp"
#include "dsvit/text.hpp"

namespace dsvit {

namespace {

std::size_t check_shapes(const Matrix& scores, const Matrix& labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("scores have " + std::to_string(scores.size()) + " rows, labels " +
                         std::to_string(labels.size()));
  }
  if (scores.empty()) return 0;
  std::size_t classes = scores.front().size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i].size() != classes || labels[i].size() != classes) {
      throw DimensionError("row " + std::to_string(i) + " has " + std::to_string(scores[i].size()) +
                           " scores and " + std::to_string(labels[i].size()) + " labels, expected " +
                           std::to_string(classes));
    }
  }
  return classes;
}

void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ContractError("threshold must lie in (0, 1), got " + format_exact(threshold));
  }
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ConfusionCounts confusion_per_class(const Matrix& scores, const Matrix& labels, double threshold) {
  check_threshold(threshold);
  std::size_t classes = check_shapes(scores, labels);
  ConfusionCounts out;
  out.samples = scores.size();
  out.classes.assign(classes, ClassCounts{});
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t c = 0; c < classes; ++c) {
      bool predicted = scores[i][c] > threshold;
      bool actual = labels[i][c] > 0.5;
      ClassCounts& k = out.classes[c];
      if (predicted && actual) ++k.tp;
      else if (predicted) ++k.fp;
      else if (actual) ++k.fn;
      else ++k.tn;
    }
  }
  return out;
}

double f_beta(const ClassCounts& counts, double beta) {
  if (!(beta > 0.0)) throw ContractError("f_beta needs beta > 0");
  double b2 = beta * beta;
  double num = (1.0 + b2) * static_cast<double>(counts.tp);
  double den = num + b2 * static_cast<double>(counts.fn) + static_cast<double>(counts.fp);
  return ratio(num, den);
}

ClassWeights uniform_weights(const std::vector<std::string>& classes) {
  ClassWeights w;
  for (const auto& c : classes) w[c] = 1.0;
  return w;
}

void validate_weights(const ClassWeights& weights) {
  bool positive = false;
  for (const auto& [name, w] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("class weight for " + name + " must be a finite value >= 0");
    }
    positive = positive || w > 0.0;
  }
  if (!positive) throw ConfigError("class weights need at least one positive entry");
}

double f2_ciw(const ConfusionCounts& counts, const ClassWeights& weights,
              const std::vector<std::string>& classes) {
  if (classes.size() != counts.classes.size()) {
    throw DimensionError("f2_ciw: " + std::to_string(classes.size()) + " class names for " +
                         std::to_string(counts.classes.size()) + " count entries");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto it = weights.find(classes[c]);
    if (it == weights.end()) throw ConfigError("no importance weight for class " + classes[c]);
    num += it->second * f_beta(counts.classes[c], 2.0);
    den += it->second;
  }
  if (!(den > 0.0)) throw ConfigError("class weights sum to zero over the evaluated classes");
  return num / den;
}

double f1_normal(const Matrix& scores, const Matrix& labels, double threshold) {
  check_threshold(threshold);
  std::size_t classes = check_shapes(scores, labels);
  ClassCounts meta;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool actual = true, predicted = true;
    for (std::size_t c = 0; c < classes; ++c) {
      actual = actual && !(labels[i][c] > 0.5);
      predicted = predicted && !(scores[i][c] > threshold);
    }
    if (predicted && actual) ++meta.tp;
    else if (predicted) ++meta.fp;
    else if (actual) ++meta.fn;
    else ++meta.tn;
  }
  return f_beta(meta, 1.0);
}

double average_precision(const std::vector<double>& scores, const std::vector<double>& labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("average_precision: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] > 0.5) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

AveragePrecision mean_average_precision(const Matrix& scores, const Matrix& labels) {
  std::size_t classes = check_shapes(scores, labels);
  AveragePrecision out;
  out.per_class.assign(classes, 0.0);
  std::size_t included = 0;
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> s(scores.size()), y(scores.size());
    bool any = false;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s[i] = scores[i][c];
      y[i] = labels[i][c];
      any = any || y[i] > 0.5;
    }
    if (!any) {
      out.skipped.push_back(c);
      continue;
    }
    out.per_class[c] = average_precision(s, y);
    total += out.per_class[c];
    ++included;
  }
  if (included == 0) throw EmptyEvaluationError("mAP: no class has a positive label");
  out.mean = total / static_cast<double>(included);
  return out;
}

PrecisionRecall overall_precision_recall(const ConfusionCounts& counts) {
  double tp = 0, fp = 0, fn = 0;
  for (const auto& k : counts.classes) {
    tp += static_cast<double>(k.tp);
    fp += static_cast<double>(k.fp);
    fn += static_cast<double>(k.fn);
  }
  return {ratio(tp, tp + fp), ratio(tp, tp + fn)};
}

MetricsReport evaluate_metrics(const Matrix& scores, const Matrix& labels,
                               const ClassWeights& weights, double threshold) {
  validate_weights(weights);
  MetricsReport r;
  r.samples = scores.size();
  r.threshold = threshold;
  ConfusionCounts counts = confusion_per_class(scores, labels, threshold);
  std::vector<std::string> names = kClassNames;
  if (counts.classes.size() != names.size()) {
    throw DimensionError("expected " + std::to_string(names.size()) + " classes, got " +
                         std::to_string(counts.classes.size()));
  }
  r.f2_ciw = f2_ciw(counts, weights, names);
  for (const auto& k : counts.classes) r.f2_per_class.push_back(f_beta(k, 2.0));
  r.f1_normal = f1_normal(scores, labels, threshold);
  AveragePrecision ap = mean_average_precision(scores, labels);
  r.map = ap.mean;
  r.ap_per_class = ap.per_class;
  r.map_skipped = ap.skipped;
  PrecisionRecall pr = overall_precision_recall(counts);
  r.op = pr.precision;
  r.orr = pr.recall;
  return r;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

void write_long(const std::string& path, const std::vector<std::string>& ids, const Matrix& values,
                const char* column, bool integer) {
  if (ids.size() != values.size()) {
    throw DimensionError(path + ": " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(values.size()) + " rows");
  }
  std::ofstream out = open_out(path);
  out << "sample_id,class," << column << "\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (values[i].size() != kClassNames.size()) {
      throw DimensionError(path + ": row " + ids[i] + " has " + std::to_string(values[i].size()) +
                           " classes");
    }
    for (std::size_t c = 0; c < kClassNames.size(); ++c) {
      out << ids[i] << "," << kClassNames[c] << ",";
      if (integer) out << (values[i][c] > 0.5 ? 1 : 0);
      else out << format_exact(values[i][c]);
      out << "\n";
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

std::size_t class_index(const std::string& name) {
  auto it = std::find(kClassNames.begin(), kClassNames.end(), name);
  if (it == kClassNames.end()) return kClassNames.size();
  return static_cast<std::size_t>(it - kClassNames.begin());
}

}  // namespace

void write_metrics_csv(const std::string& path, const MetricsReport& r) {
  std::ofstream out = open_out(path);
  out << "metric,value\n";
  out << "samples," << r.samples << "\n";
  out << "threshold," << format_exact(r.threshold) << "\n";
  out << "f1_normal," << format_exact(r.f1_normal) << "\n";
  out << "f2_ciw," << format_exact(r.f2_ciw) << "\n";
  out << "map," << format_exact(r.map) << "\n";
  out << "op_micro," << format_exact(r.op) << "\n";
  out << "or_micro," << format_exact(r.orr) << "\n";
  for (std::size_t c = 0; c < r.f2_per_class.size(); ++c) {
    out << "f2_" << kClassNames[c] << "," << format_exact(r.f2_per_class[c]) << "\n";
  }
  for (std::size_t c = 0; c < r.ap_per_class.size(); ++c) {
    bool skipped = std::find(r.map_skipped.begin(), r.map_skipped.end(), c) != r.map_skipped.end();
    out << "ap_" << kClassNames[c] << "," << (skipped ? "skipped" : format_exact(r.ap_per_class[c]))
        << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

std::string format_metrics_table(const MetricsReport& r) {
  std::ostringstream out;
  char line[128];
  out << "samples: " << r.samples << "  threshold: > " << r.threshold << "\n";
  std::snprintf(line, sizeof line, "%-22s %8.4f\n", "F1-Normal", r.f1_normal);
  out << line;
  std::snprintf(line, sizeof line, "%-22s %8.4f\n", "F2-CIW", r.f2_ciw);
  out << line;
  std::snprintf(line, sizeof line, "%-22s %8.4f\n", "mAP", r.map);
  out << line;
  std::snprintf(line, sizeof line, "%-22s %8.4f\n", "OP (micro)", r.op);
  out << line;
  std::snprintf(line, sizeof line, "%-22s %8.4f\n", "OR (micro)", r.orr);
  out << line;
  out << "class      F2      AP\n";
  for (std::size_t c = 0; c < r.f2_per_class.size(); ++c) {
    bool skipped = std::find(r.map_skipped.begin(), r.map_skipped.end(), c) != r.map_skipped.end();
    if (skipped) {
      std::snprintf(line, sizeof line, "%-6s %8.4f  skipped\n", kClassNames[c].c_str(),
                    r.f2_per_class[c]);
    } else {
      std::snprintf(line, sizeof line, "%-6s %8.4f %8.4f\n", kClassNames[c].c_str(),
                    r.f2_per_class[c], r.ap_per_class[c]);
    }
    out << line;
  }
  return out.str();
}

void write_predictions_csv(const std::string& path, const std::vector<std::string>& ids,
                           const Matrix& scores) {
  write_long(path, ids, scores, "score", false);
}

void write_labels_csv(const std::string& path, const std::vector<std::string>& ids,
                      const Matrix& labels) {
  write_long(path, ids, labels, "label", true);
}

LongTable read_long_csv(const std::string& path, const std::string& value_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || split_fields(line) !=
                                     std::vector<std::string>{"sample_id", "class", value_column}) {
    throw IoError(path + ": expected header sample_id,class," + value_column);
  }
  LongTable table;
  std::map<std::string, std::size_t> row_of;
  std::vector<std::vector<bool>> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    std::string where = path + ":" + std::to_string(lineno);
    double v = 0.0;
    if (f.size() != 3 || !parse_double(f[2], v)) throw IoError(where + ": malformed row");
    std::size_t c = class_index(f[1]);
    if (c == kClassNames.size()) throw IoError(where + ": unknown class " + f[1]);
    auto [it, fresh] = row_of.emplace(f[0], table.ids.size());
    if (fresh) {
      table.ids.push_back(f[0]);
      table.values.emplace_back(kClassNames.size(), 0.0);
      seen.emplace_back(kClassNames.size(), false);
    }
    if (seen[it->second][c]) throw IoError(where + ": duplicate entry for " + f[0] + "/" + f[1]);
    seen[it->second][c] = true;
    table.values[it->second][c] = v;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    for (std::size_t c = 0; c < kClassNames.size(); ++c) {
      if (!seen[i][c]) throw IoError(path + ": sample " + table.ids[i] + " lacks class " + kClassNames[c]);
    }
  }
  return table;
}

ClassWeights read_class_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  ClassWeights weights;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto f = split_fields(t);
    std::string where = path + ":" + std::to_string(lineno);
    if (f.size() == 2 && f[0] == "class" && f[1] == "weight") continue;
    double w = 0.0;
    if (f.size() != 2 || !parse_double(f[1], w)) throw ConfigError(where + ": expected class,weight");
    if (class_index(f[0]) == kClassNames.size()) throw ConfigError(where + ": unknown class " + f[0]);
    if (!weights.emplace(f[0], w).second) throw ConfigError(where + ": duplicate weight for " + f[0]);
  }
  validate_weights(weights);
  return weights;
}

}  // namespace dsvit
