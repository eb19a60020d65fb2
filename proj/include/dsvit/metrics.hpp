#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace dsvit {

/// Fixed label vocabulary, in label-vector order.
inline const std::vector<std::string> kClassNames{"DE", "FS", "AF", "GR", "OK"};

/// samples × classes. Scores are probabilities; labels are 0 or 1.
using Matrix = std::vector<std::vector<double>>;

inline constexpr double kDefaultThreshold = 0.5;

struct ClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ClassCounts&) const = default;
};

struct ConfusionCounts {
  std::vector<ClassCounts> classes;
  std::size_t samples = 0;
};

/// Positive prediction iff score > threshold (strict).
ConfusionCounts confusion_per_class(const Matrix& scores, const Matrix& labels,
                                    double threshold = kDefaultThreshold);

/// (1+β²)TP / ((1+β²)TP + β²FN + FP); 0 when the denominator is 0.
double f_beta(const ClassCounts& counts, double beta);

/// class name → importance weight (≥ 0, at least one positive).
using ClassWeights = std::map<std::string, double>;

ClassWeights uniform_weights(const std::vector<std::string>& classes = kClassNames);
void validate_weights(const ClassWeights& weights);

/// Σ w_c F2_c / Σ w_c over `classes` (parallel to counts.classes). Every class
/// needs a weight; a missing one is a ConfigError.
double f2_ciw(const ConfusionCounts& counts, const ClassWeights& weights,
              const std::vector<std::string>& classes = kClassNames);

/// Binary F1 of the "no defect" meta-class: actual iff every label is 0,
/// predicted iff every score is at or below the threshold.
double f1_normal(const Matrix& scores, const Matrix& labels, double threshold = kDefaultThreshold);

struct AveragePrecision {
  double mean = 0.0;
  /// Per-class AP; entries for skipped classes are 0 and listed in `skipped`.
  std::vector<double> per_class;
  std::vector<std::size_t> skipped;
};

/// AP per class over the score ranking (stable: ties keep input order),
/// averaged over classes with at least one positive. Throws
/// EmptyEvaluationError if no class has a positive.
AveragePrecision mean_average_precision(const Matrix& scores, const Matrix& labels);

/// Single-class AP on one score column.
double average_precision(const std::vector<double>& scores, const std::vector<double>& labels);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

/// Micro-averaged over classes; 0 on a zero denominator.
PrecisionRecall overall_precision_recall(const ConfusionCounts& counts);

struct MetricsReport {
  std::size_t samples = 0;
  double threshold = kDefaultThreshold;
  double f1_normal = 0.0;
  double f2_ciw = 0.0;
  double map = 0.0;
  double op = 0.0;
  double orr = 0.0;
  std::vector<double> f2_per_class;
  std::vector<double> ap_per_class;
  std::vector<std::size_t> map_skipped;
};

MetricsReport evaluate_metrics(const Matrix& scores, const Matrix& labels,
                               const ClassWeights& weights, double threshold = kDefaultThreshold);

/// `metric,value` rows with %.17g values.
void write_metrics_csv(const std::string& path, const MetricsReport& report);
std::string format_metrics_table(const MetricsReport& report);

/// Long-format tables: `sample_id,class,score` and `sample_id,class,label`.
void write_predictions_csv(const std::string& path, const std::vector<std::string>& ids,
                           const Matrix& scores);
void write_labels_csv(const std::string& path, const std::vector<std::string>& ids,
                      const Matrix& labels);

struct LongTable {
  std::vector<std::string> ids;  // first-seen order
  Matrix values;                 // ids × kClassNames
};

/// Reads either long-format file. Every (id, class) pair must appear exactly once.
LongTable read_long_csv(const std::string& path, const std::string& value_column);

/// `class,weight` rows, optional header. Unknown classes are rejected.
ClassWeights read_class_weights(const std::string& path);

}  // namespace dsvit
