#include "oodf/losses.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "oodf/error.hpp"

namespace oodf {

namespace {

void require_log_probs(const Tensor& log_probs, const char* op) {
  if (log_probs.rank() != 2 || log_probs.dim(1) == 0) {
    throw ShapeError(std::string(op) + ": expected [N, K] log-probabilities, got " +
                     shape_string(log_probs.shape()));
  }
  if (log_probs.dim(0) == 0) throw ValueError(std::string(op) + ": empty batch");
}

}  // namespace

ClassWeights class_weights(std::span<const std::size_t> class_counts, WeightMode mode,
                           std::span<const double> manual) {
  const std::size_t k = class_counts.size();
  if (k < 2) throw ValueError("class_weights: need at least two classes");
  ClassWeights out;
  out.class_counts.assign(class_counts.begin(), class_counts.end());
  for (std::size_t c : class_counts) out.total += c;

  if (mode == WeightMode::kManual) {
    if (manual.size() != k) {
      throw ValueError("class_weights: " + std::to_string(manual.size()) +
                       " manual weights for " + std::to_string(k) + " classes");
    }
    for (double w : manual) {
      if (!(w > 0) || !std::isfinite(w)) {
        throw ValueError("class_weights: manual weights must be positive and finite");
      }
    }
    out.weights.assign(manual.begin(), manual.end());
    out.source = WeightSource::kManual;
    return out;
  }

  out.source = WeightSource::kFormula;
  const double n = static_cast<double>(out.total);
  for (std::size_t i = 0; i < k; ++i) {
    if (class_counts[i] == 0) {
      throw ValueError("class_weights: class " + std::to_string(i) +
                       " has no training samples; the formula is undefined");
    }
    out.weights.push_back(n / (static_cast<double>(k) * static_cast<double>(class_counts[i])));
  }
  if (mode == WeightMode::kRescaled) {
    const double first = out.weights.front();
    for (double& w : out.weights) w /= first;
    out.weights.front() = 1.0;
  }
  return out;
}

ClassWeights uniform_weights(std::size_t num_classes) {
  ClassWeights out;
  out.weights.assign(num_classes, 1.0);
  out.class_counts.assign(num_classes, 0);
  return out;
}

double weighted_cross_entropy(const Tensor& log_probs, std::span<const std::size_t> labels,
                              const ClassWeights& weights) {
  require_log_probs(log_probs, "weighted_cross_entropy");
  const std::size_t n = log_probs.dim(0), k = log_probs.dim(1);
  if (labels.size() != n) {
    throw ShapeError("weighted_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(n));
  }
  if (weights.num_classes() != k) {
    throw ShapeError("weighted_cross_entropy: " + std::to_string(weights.num_classes()) +
                     " weights for " + std::to_string(k) + " classes");
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (labels[j] >= k) {
      throw ValueError("weighted_cross_entropy: label " + std::to_string(labels[j]) +
                       " at index " + std::to_string(j) + " outside [0, " + std::to_string(k) +
                       ")");
    }
    sum += weights.weights[labels[j]] * log_probs.at(j, labels[j]);
  }
  return -sum / static_cast<double>(n);
}

double oe_uniform_loss(const Tensor& log_probs) {
  require_log_probs(log_probs, "oe_uniform_loss");
  double sum = 0.0;
  for (double v : log_probs.data()) sum += v;
  return -sum / static_cast<double>(log_probs.size());
}

double oe_labeled_loss(const Tensor& log_probs, std::span<const std::optional<std::size_t>> labels,
                       const ClassWeights& weights) {
  std::vector<std::size_t> dense;
  dense.reserve(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (!labels[j]) {
      throw ValueError("oe_labeled_loss: outlier sample " + std::to_string(j) +
                       " has no label; use oe_uniform_loss for unlabelled outliers");
    }
    dense.push_back(*labels[j]);
  }
  return weighted_cross_entropy(log_probs, dense, weights);
}

void validate(const LambdaSchedule& s) {
  if (!(s.fixed_value >= 0) || !std::isfinite(s.fixed_value)) {
    throw ValueError("lambda: fixed value must be finite and non-negative");
  }
  if (!(s.d_kl >= 0) || !std::isfinite(s.d_kl)) {
    throw ValueError("lambda: KL distance must be finite and non-negative");
  }
  if (s.total_epochs == 0) throw ValueError("lambda: total_epochs must be positive");
}

double lambda_value(const LambdaSchedule& schedule, std::size_t epoch) {
  return lambda_value(schedule, epoch, schedule.d_kl);
}

double lambda_value(const LambdaSchedule& schedule, std::size_t epoch, double d_kl) {
  validate(schedule);
  if (!(d_kl >= 0) || !std::isfinite(d_kl)) {
    throw ValueError("lambda: KL distance must be finite and non-negative");
  }
  if (epoch > schedule.total_epochs) {
    throw ValueError("lambda: epoch " + std::to_string(epoch) + " beyond total_epochs " +
                     std::to_string(schedule.total_epochs));
  }
  switch (schedule.mode) {
    case LambdaMode::kFixed:
      return schedule.fixed_value;
    case LambdaMode::kKlStatic:
      return std::tanh(d_kl);
    case LambdaMode::kKlEpoch: {
      const double phase = static_cast<double>(epoch) * std::numbers::pi /
                           static_cast<double>(schedule.total_epochs);
      return std::tanh(d_kl) * (1.0 - std::cos(phase));
    }
  }
  return 0.0;
}

LossValue combined_objective(double in_loss, double oe_loss, double lambda) {
  if (!(in_loss >= 0) || !(oe_loss >= 0)) {
    throw ValueError("combined_objective: cross-entropy terms must be non-negative (in=" +
                     std::to_string(in_loss) + ", oe=" + std::to_string(oe_loss) + ")");
  }
  if (!(lambda >= 0) || !std::isfinite(lambda)) {
    throw ValueError("combined_objective: lambda must be finite and non-negative");
  }
  return {in_loss + lambda * oe_loss, in_loss, oe_loss, lambda};
}

LossValue combined_objective(double in_loss, double oe_loss, const LambdaSchedule& schedule,
                             std::size_t epoch) {
  return combined_objective(in_loss, oe_loss, lambda_value(schedule, epoch));
}

double importance_estimate(std::span<const double> samples,
                           const std::function<double(double)>& p,
                           const std::function<double(double)>& q,
                           const std::function<double(double)>& f) {
  if (samples.empty()) throw ValueError("importance_estimate: no samples");
  double sum = 0.0;
  for (double x : samples) {
    const double px = p(x);
    const double qx = q(x);
    if (!(px > 0)) {
      throw ValueError("importance_estimate: P(x) = 0 at observed sample " + std::to_string(x));
    }
    const double ratio = qx / px;
    if (!(ratio >= 0) || !std::isfinite(ratio)) {
      throw ValueError("importance_estimate: ratio not finite and non-negative at " +
                       std::to_string(x));
    }
    sum += ratio * f(x);
  }
  return sum / static_cast<double>(samples.size());
}

double importance_expectation(std::span<const double> p, std::span<const double> q,
                              std::span<const double> f) {
  if (p.size() != q.size() || p.size() != f.size() || p.empty()) {
    throw ShapeError("importance_expectation: p, q and f must share a non-empty support");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0)) {
      throw ValueError("importance_expectation: P(x) = 0 at support index " + std::to_string(i));
    }
    if (!(q[i] >= 0)) throw ValueError("importance_expectation: negative Q");
    sum += p[i] * (q[i] / p[i]) * f[i];
  }
  return sum;
}

}  // namespace oodf
