#include "oodf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "oodf/error.hpp"

namespace oodf {

namespace {

void check_binary(std::size_t value, const char* what, std::size_t index) {
  if (value > 1) {
    throw ValueError(std::string("metrics: ") + what + " " + std::to_string(value) + " at index " +
                     std::to_string(index) + " is not a binary class");
  }
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string format_threshold(double t) {
  if (std::isinf(t)) return "inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", t);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

ConfusionMatrix confusion(std::span<const std::size_t> predictions,
                          std::span<const std::size_t> labels, std::size_t positive_class) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  check_binary(positive_class, "positive class", 0);
  ConfusionMatrix cm;
  cm.positive_class = positive_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_binary(predictions[i], "prediction", i);
    check_binary(labels[i], "label", i);
    const bool pred = predictions[i] == positive_class;
    const bool actual = labels[i] == positive_class;
    if (pred && actual) ++cm.tp;
    else if (pred) ++cm.fp;
    else if (actual) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

Scores scores_from_confusion(const ConfusionMatrix& cm) {
  Scores s;
  s.precision = ratio(cm.tp, cm.tp + cm.fp);
  s.recall = ratio(cm.tp, cm.tp + cm.fn);
  if (cm.total() == 0) throw ValueError("scores_from_confusion: empty confusion matrix");
  s.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  if (s.precision && s.recall && *s.precision + *s.recall > 0) {
    s.f1 = 2.0 * *s.precision * *s.recall / (*s.precision + *s.recall);
  }
  return s;
}

RocResult roc_auc(std::span<const double> scores, std::span<const std::size_t> labels,
                  std::size_t positive_class) {
  if (scores.size() != labels.size()) {
    throw ShapeError("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(labels.size()) + " labels");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_binary(labels[i], "label", i);
    if (!std::isfinite(scores[i])) {
      throw ValueError("roc_auc: non-finite score at index " + std::to_string(i));
    }
    if (labels[i] == positive_class) ++positives;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ValueError("roc_auc: both classes must be present");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  r.curve.fpr.push_back(0.0);
  r.curve.tpr.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  // Twice the area, accumulated in counts so the sum is exact until the final division.
  double area2 = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    const std::size_t tp_before = tp, fp_before = fp;
    for (; i < order.size() && scores[order[i]] == t; ++i) {
      if (labels[order[i]] == positive_class) ++tp;
      else ++fp;
    }
    area2 += static_cast<double>(fp - fp_before) * static_cast<double>(tp + tp_before);
    r.curve.thresholds.push_back(t);
    r.curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
    r.curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(positives));
  }
  r.auroc = area2 / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return r;
}

MetricsReport evaluate(std::span<const std::size_t> predictions, std::span<const double> scores,
                       std::span<const std::size_t> labels, std::size_t positive_class) {
  MetricsReport m;
  m.confusion = confusion(predictions, labels, positive_class);
  const Scores s = scores_from_confusion(m.confusion);
  m.precision = s.precision;
  m.recall = s.recall;
  m.accuracy = s.accuracy;
  m.f1 = s.f1;
  if (m.confusion.tp + m.confusion.fn > 0 && m.confusion.tn + m.confusion.fp > 0) {
    RocResult roc = roc_auc(scores, labels, positive_class);
    m.auroc = roc.auroc;
    m.roc = std::move(roc.curve);
  }
  return m;
}

std::string format_metric(std::optional<double> value) {
  if (!value) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", *value);
  return buf;
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         std::span<const std::string> class_names) {
  const auto name = [&](std::size_t c) {
    return c < class_names.size() ? class_names[c] : std::to_string(c);
  };
  const std::size_t pos = cm.positive_class, neg = 1 - cm.positive_class;
  auto out = open_out(path);
  out << "predicted,actual,count\n";
  out << name(neg) << ',' << name(neg) << ',' << cm.tn << '\n';
  out << name(neg) << ',' << name(pos) << ',' << cm.fn << '\n';
  out << name(pos) << ',' << name(neg) << ',' << cm.fp << '\n';
  out << name(pos) << ',' << name(pos) << ',' << cm.tp << '\n';
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
  auto out = open_out(path);
  out << "precision,recall,accuracy,f1,auroc\n"
      << format_metric(report.precision) << ',' << format_metric(report.recall) << ','
      << format_metric(report.accuracy) << ',' << format_metric(report.f1) << ','
      << format_metric(report.auroc) << '\n';
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  auto out = open_out(path);
  out << "threshold,fpr,tpr\n";
  char buf[96];
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", curve.fpr[i], curve.tpr[i]);
    out << format_threshold(curve.thresholds[i]) << buf;
  }
}

void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const PredictionRow> rows) {
  auto out = open_out(path);
  out << "id,label,predicted,p_class1\n";
  char buf[40];
  for (const PredictionRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.p_class1);
    out << r.id << ',' << r.label << ',' << r.predicted << ',' << buf << '\n';
  }
}

std::vector<PredictionRow> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "id,label,predicted,p_class1") {
    throw IoError(path.string() + ":1: expected header id,label,predicted,p_class1");
  }
  std::vector<PredictionRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    // The identifier may itself contain commas; the numeric fields are the last three.
    std::vector<std::string> tail;
    std::string rest = line;
    for (int k = 0; k < 3; ++k) {
      const auto comma = rest.rfind(',');
      if (comma == std::string::npos) throw IoError(where + "expected 4 fields");
      tail.push_back(rest.substr(comma + 1));
      rest.resize(comma);
    }
    PredictionRow r;
    r.id = rest;
    try {
      std::size_t used = 0;
      r.p_class1 = std::stod(tail[0], &used);
      if (used != tail[0].size()) throw std::invalid_argument("trailing");
      r.predicted = std::stoul(tail[1], &used);
      if (used != tail[1].size()) throw std::invalid_argument("trailing");
      r.label = std::stoul(tail[2], &used);
      if (used != tail[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw IoError(where + "malformed numeric field");
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw IoError("predictions '" + path.string() + "' has no rows");
  return rows;
}

}  // namespace oodf
