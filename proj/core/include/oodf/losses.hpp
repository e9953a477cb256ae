#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "oodf/tensor.hpp"

namespace oodf {

// ---------------------------------------------------------------------------
// Class re-weighting

enum class WeightSource { kFormula, kManual };

/// How class weights are obtained from training class counts.
///   kFormula   w_i = n / (K * count_i)
///   kRescaled  kFormula divided through by w_0, so the first class has weight 1
///   kManual    caller-supplied values, validated
enum class WeightMode { kFormula, kRescaled, kManual };

struct ClassWeights {
  std::vector<double> weights;
  WeightSource source = WeightSource::kManual;
  std::vector<std::size_t> class_counts;
  std::size_t total = 0;

  std::size_t num_classes() const noexcept { return weights.size(); }
};

ClassWeights class_weights(std::span<const std::size_t> class_counts, WeightMode mode,
                           std::span<const double> manual = {});

/// All-ones weights for K classes.
ClassWeights uniform_weights(std::size_t num_classes);

// ---------------------------------------------------------------------------
// Loss values on [N, K] log-probability tensors

/// -(1/N) sum_j w[y_j] log p(y_j | x_j)
double weighted_cross_entropy(const Tensor& log_probs, std::span<const std::size_t> labels,
                              const ClassWeights& weights);

/// Cross-entropy from the predicted distribution to the uniform one:
/// -(1/N) sum_j (1/K) sum_i log p(i | x_j). Minimum ln K at uniform predictions.
double oe_uniform_loss(const Tensor& log_probs);

/// Labelled outlier variant: weighted cross-entropy on the outlier batch.
/// Throws if any outlier sample has no label.
double oe_labeled_loss(const Tensor& log_probs, std::span<const std::optional<std::size_t>> labels,
                       const ClassWeights& weights);

// ---------------------------------------------------------------------------
// Mixing coefficient

enum class LambdaMode { kFixed, kKlStatic, kKlEpoch };
enum class KlScope { kFullDistribution, kPerBatch };

struct LambdaSchedule {
  LambdaMode mode = LambdaMode::kFixed;
  double fixed_value = 0.5;
  double d_kl = 0.0;
  std::size_t total_epochs = 20;
  KlScope kl_scope = KlScope::kFullDistribution;
};

void validate(const LambdaSchedule& schedule);

/// fixed:     fixed_value
/// kl_static: tanh(d_kl)
/// kl_epoch:  tanh(d_kl) * (1 - cos(epoch * pi / total_epochs))
/// Epochs run over [0, total_epochs].
double lambda_value(const LambdaSchedule& schedule, std::size_t epoch);

/// Same as above with the divergence supplied by the caller (per-batch scope).
double lambda_value(const LambdaSchedule& schedule, std::size_t epoch, double d_kl);

struct LossValue {
  double total = 0.0;
  double in_dist_term = 0.0;
  double oe_term = 0.0;
  double lambda_used = 0.0;
};

/// total = in_loss + lambda * oe_loss. Cross-entropy terms must be non-negative.
LossValue combined_objective(double in_loss, double oe_loss, double lambda);
LossValue combined_objective(double in_loss, double oe_loss, const LambdaSchedule& schedule,
                             std::size_t epoch);

// ---------------------------------------------------------------------------
// Importance sampling

/// (1/n) sum_j (q(x_j) / p(x_j)) f(x_j) over samples drawn from p.
double importance_estimate(std::span<const double> samples,
                           const std::function<double(double)>& p,
                           const std::function<double(double)>& q,
                           const std::function<double(double)>& f);

/// Exhaustive version over a finite support: sum_x p(x) (q(x)/p(x)) f(x),
/// i.e. the exact E_p[(q/p) f]. Requires p(x) > 0 wherever it is evaluated.
double importance_expectation(std::span<const double> p, std::span<const double> q,
                              std::span<const double> f);

}  // namespace oodf
