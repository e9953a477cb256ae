#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oodf/labels.hpp"
#include "oodf/losses.hpp"
#include "oodf/models.hpp"

namespace oodf {

enum class ExperimentKind { kToyExample1, kToyExample2, kImage };
enum class OeMode { kNone, kUniform, kLabeled };
enum class OutlierSource { kFullDataset, kMinedTopFraction, kExternal };
/// Histogram candidates are scored against when mining.
enum class MiningReference { kTrain, kCandidates };

/// How class weights are chosen. kNone means all weights are 1.
struct WeightConfig {
  enum class Mode { kNone, kFormula, kRescaled, kManual } mode = Mode::kNone;
  std::vector<double> values;  // manual mode only
};

struct LossConfig {
  WeightConfig weights;
  OeMode oe_mode = OeMode::kNone;
  /// Apply the class weights inside the labelled outlier term as well.
  bool weight_oe_term = false;
};

/// A directory of images labelled either by file name or by a CSV file.
struct ImageSetConfig {
  std::filesystem::path dir;
  std::optional<std::filesystem::path> labels_csv;
};

struct OutlierConfig {
  OutlierSource source = OutlierSource::kFullDataset;
  ImageSetConfig images;
  /// kMinedTopFraction: share of the candidate set kept.
  double fraction = 0.2;
  /// kMinedTopFraction: score against the training set or the candidate pool itself.
  MiningReference reference = MiningReference::kTrain;
  /// kExternal: manifest produced by mine-outliers.
  std::filesystem::path manifest;
};

struct ImageDataConfig {
  Attribute attribute = Attribute::kGender;
  std::size_t side = 32;
  ImageSetConfig train;
  ImageSetConfig test;
  std::optional<OutlierConfig> outliers;
};

struct GridConfig {
  double lo = -6.0;
  double hi = 6.0;
  std::size_t points_per_axis = 101;
};

/// Synthetic two-dimensional setups.
struct ToyConfig {
  std::size_t train_count = 2000;
  double train_half_width = 1.5;   // toy_example1 training square
  std::size_t test_count = 2000;   // toy_example2 shifted test sample
  std::size_t oe_count = 2000;
  double oe_inner = 1.5;           // toy_example1 outlier band
  double oe_outer = 6.0;
  double ood_offset = 3.0;         // toy_example2 mixture means at (+-offset, 0)
  double annulus_r_min_sq = 2.0;
  double annulus_r_max_sq = 5.0;
  GridConfig grid;
  /// Points with max(|x1|, |x2|) above this count as far out of distribution.
  double far_threshold = 4.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kToyExample1;
  std::uint64_t seed = 0;
  std::size_t trials = 1;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  std::filesystem::path output_dir = "out";
  MlpConfig mlp;
  CnnConfig cnn;
  LossConfig loss;
  LambdaSchedule lambda;
  /// Set when the config supplies d_kl; otherwise it is measured from data.
  bool d_kl_given = false;
  ToyConfig toy;
  ImageDataConfig data;
  /// Write a probability grid for toy experiments.
  bool emit_grid = true;
  bool save_checkpoint = true;
};

/// Parses JSON text. Unknown keys, wrong types and missing required keys
/// raise ConfigError carrying the key path. Relative paths are resolved
/// against `base_dir`.
ExperimentConfig parse_config_text(std::string_view text,
                                   const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Cross-field checks; also called by the parsers.
void validate(const ExperimentConfig& config);

std::string_view kind_name(ExperimentKind kind) noexcept;

}  // namespace oodf
