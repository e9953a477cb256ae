#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oodf/config.hpp"
#include "oodf/dataset.hpp"
#include "oodf/distshift.hpp"
#include "oodf/losses.hpp"
#include "oodf/metrics.hpp"
#include "oodf/models.hpp"

namespace oodf {

/// Independent seed for one consumer (initialization, shuffling, data) of a trial.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Per-epoch means over batches. For per-batch KL scope `lambda` is the
/// OE-loss-weighted average of the batch values, so that
/// total_loss = in_loss + lambda * oe_loss still holds.
struct EpochRecord {
  std::size_t epoch = 0;
  double lambda = 0.0;
  double in_loss = 0.0;
  double oe_loss = 0.0;
  double total_loss = 0.0;
};

struct History {
  std::vector<EpochRecord> epochs;
};

/// history.csv: `epoch,lambda,in_loss,oe_loss,total_loss`.
void write_history_csv(const std::filesystem::path& path, const History& history);

/// Datasets for one trial.
struct ExperimentData {
  Dataset train;
  Dataset test;
  std::optional<Dataset> outliers;
  /// Evaluation grid for toy experiments.
  std::optional<Dataset> mesh;
};

/// Builds (toy) or loads (image) every dataset a trial needs. Toy data
/// depends on `trial_seed`; image data does not.
ExperimentData prepare_data(const ExperimentConfig& config, std::uint64_t trial_seed);

/// Freshly initialized network for the configured experiment.
Model initial_model(const ExperimentConfig& config, std::uint64_t seed);

/// Class weights as configured, from the training class counts.
ClassWeights configured_weights(const ExperimentConfig& config, const Dataset& train);

/// Divergence used by KL schedules: the configured value, or
/// KL(train pixels || outlier pixels) for image data when none is given.
double schedule_divergence(const ExperimentConfig& config, const ExperimentData& data);

struct TrainResult {
  Model model;
  History history;
  ClassWeights weights;
  double d_kl = 0.0;
};

/// Adam on weighted cross-entropy plus, when enabled, lambda times the
/// outlier term. Outlier batches cycle independently of the training batches.
/// A non-finite loss aborts with the epoch and batch in the message.
TrainResult train(const ExperimentConfig& config, const ExperimentData& data,
                  std::uint64_t trial_seed);

/// One row per sample with a label; class-1 probability and argmax prediction.
std::vector<PredictionRow> predict_rows(const Model& model, const Dataset& dataset);

double accuracy(const Model& model, const Dataset& dataset);

/// `x1,x2,p_class1` for every point of a two-dimensional dataset.
void emit_probability_grid(const Model& model, const Dataset& mesh,
                           const std::filesystem::path& path);

/// Confidence statistics for toy runs on a labelled mesh.
struct ToySummary {
  double train_accuracy = 0.0;
  /// Mesh points with max(|x1|, |x2|) > far_threshold and true class 0.
  std::size_t far_points = 0;
  double far_mean_confidence = 0.0;        // mean max-softmax
  double far_confidently_wrong = 0.0;      // share with p(wrong class) > 0.9
  /// Class-0 mesh points outside the training square with p(class 1) > 0.9.
  double outside_confident_class1 = 0.0;
};

ToySummary toy_summary(const Model& model, const Dataset& mesh, const Dataset& train,
                       double far_threshold, double train_half_width);

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  History history;
  std::optional<ToySummary> toy;
  std::filesystem::path dir;
};

/// Mean and standard error (sample sd / sqrt(n), 0 for one trial) over the
/// trials where the metric is defined.
struct AggregateRow {
  std::string metric;
  std::optional<double> mean;
  std::optional<double> std_error;
  std::size_t count = 0;
};

std::vector<AggregateRow> aggregate_metrics(std::span<const MetricsReport> reports);

struct RunArtifacts {
  std::filesystem::path output_dir;
  std::vector<TrialResult> trials;
  std::vector<AggregateRow> aggregate;
};

/// Runs config.trials trials with seeds seed + k and writes, under
/// output_dir: trial_<k>/{history,predictions,confusion,metrics,roc}.csv
/// (plus grid.csv and toy_summary.csv for toy runs and the checkpoint),
/// trials.csv and aggregate.csv. If a trial aborts, FAILED records why and
/// the error is rethrown.
RunArtifacts run_experiment(const ExperimentConfig& config);

struct MiningResult {
  OutlierManifest manifest;
  Dataset outliers;
};

/// Scores the configured outlier candidates against the training pixel
/// histogram and keeps the top fraction.
MiningResult mine_outliers(const ExperimentConfig& config);

}  // namespace oodf
