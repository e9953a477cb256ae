#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oodf/labels.hpp"
#include "oodf/tensor.hpp"

namespace oodf {

enum class Role { kTrain, kTest, kOutlierExposure };

std::string_view role_name(Role role) noexcept;

/// One labelled (or unlabelled outlier) example. Train and test samples
/// always carry a label.
struct Sample {
  std::string id;
  Tensor input;
  std::optional<std::size_t> label;
  Role role = Role::kTrain;
};

struct SkipEntry {
  std::string identifier;
  std::string reason;
};

struct Dataset {
  std::vector<Sample> samples;
  /// Files that could not be used; never fatal on their own.
  std::vector<SkipEntry> skipped;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  /// Inputs of the given samples stacked into [n, ...].
  Tensor inputs(std::span<const std::size_t> indices) const;
  Tensor inputs() const;
  /// Labels of the given samples; throws if any is missing.
  std::vector<std::size_t> labels(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> labels() const;
  std::vector<std::size_t> class_counts(std::size_t num_classes) const;

  void set_role(Role role);
  /// Samples whose identifiers appear in `ids`, in `ids` order.
  Dataset subset(std::span<const std::string> ids) const;
  void sort_by_id();
};

/// Seeded shuffle of [0, n) keyed by (seed, epoch), cut into batches of
/// `batch_size`. The final partial batch is kept.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t seed, std::size_t epoch);
std::vector<std::vector<std::size_t>> batches(const Dataset& dataset, std::size_t batch_size,
                                              std::uint64_t seed, std::size_t epoch);

/// One sample per decodable file whose name follows
/// `<age>_<gender 0|1>_<race 0-4>_<free>.{png,jpg,raw}`. Other files land in
/// the skip report. Samples are sorted by identifier (the file name).
Dataset load_image_dir(const std::filesystem::path& dir, const LabelSchema& schema,
                       Role role = Role::kTrain, std::size_t side = 32);

/// Outlier images: every decodable image file, labelled when its name
/// follows the grammar above and unlabelled otherwise.
Dataset load_outlier_dir(const std::filesystem::path& dir, const LabelSchema& schema,
                         std::size_t side = 32);

/// Labels from a CSV with header columns `file` plus the schema's attribute
/// column (`file,age,gender,race`); files are resolved relative to `image_dir`.
Dataset load_csv_labels(const std::filesystem::path& image_dir,
                        const std::filesystem::path& csv_path, const LabelSchema& schema,
                        Role role = Role::kTrain, std::size_t side = 32);

/// `identifier<TAB>reason` per line.
void write_skip_report(const std::filesystem::path& path, std::span<const SkipEntry> skipped);

}  // namespace oodf
