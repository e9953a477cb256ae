#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oodf {

/// Binary confusion counts for a chosen positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t positive_class = 1;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  /// The same predictions seen with the other class as positive.
  ConfusionMatrix swapped() const noexcept { return {tn, fn, fp, tp, 1 - positive_class}; }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Labels and predictions must be 0 or 1.
ConfusionMatrix confusion(std::span<const std::size_t> predictions,
                          std::span<const std::size_t> labels, std::size_t positive_class = 1);

/// An empty optional means the metric is undefined (zero denominator).
struct Scores {
  std::optional<double> precision;
  std::optional<double> recall;
  double accuracy = 0.0;
  std::optional<double> f1;
};

Scores scores_from_confusion(const ConfusionMatrix& cm);

/// Points run from (0,0) to (1,1). thresholds[0] is +infinity; every later
/// point lowers the threshold to the next distinct score.
struct RocCurve {
  std::vector<double> thresholds;
  std::vector<double> fpr;
  std::vector<double> tpr;
};

struct RocResult {
  RocCurve curve;
  double auroc = 0.0;
};

/// `scores` are positive-class probabilities. Throws unless both classes occur.
RocResult roc_auc(std::span<const double> scores, std::span<const std::size_t> labels,
                  std::size_t positive_class = 1);

struct MetricsReport {
  std::optional<double> precision;
  std::optional<double> recall;
  double accuracy = 0.0;
  std::optional<double> f1;
  std::optional<double> auroc;  // undefined when the labels hold a single class
  ConfusionMatrix confusion;
  RocCurve roc;
};

MetricsReport evaluate(std::span<const std::size_t> predictions, std::span<const double> scores,
                       std::span<const std::size_t> labels, std::size_t positive_class = 1);

/// "%.6f", or "NA" when undefined.
std::string format_metric(std::optional<double> value);

/// Rows in the order (neg,neg), (neg,pos), (pos,neg), (pos,pos) as
/// predicted,actual. Class names default to the indices.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         std::span<const std::string> class_names = {});
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);

/// One evaluated sample: identifier, true label, predicted label, and
/// probability of class 1.
struct PredictionRow {
  std::string id;
  std::size_t label = 0;
  std::size_t predicted = 0;
  double p_class1 = 0.0;
};

/// predictions.csv: header `id,label,predicted,p_class1`.
void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionRow> rows);
std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path);

}  // namespace oodf
