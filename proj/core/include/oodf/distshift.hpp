#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oodf/dataset.hpp"
#include "oodf/image_io.hpp"
#include "oodf/models.hpp"

namespace oodf {

inline constexpr std::size_t kPixelBins = 256;
/// Added to every bin probability before renormalization, so no bin is empty.
inline constexpr double kDefaultSmoothing = 1e-8;

/// Fraction of pixels (all channels pooled) at each intensity 0..255.
struct PixelHistogram {
  std::vector<double> bins;
  std::size_t count = 0;
  double smoothing_epsilon = kDefaultSmoothing;

  double mean_intensity() const noexcept;
};

PixelHistogram histogram_from_counts(std::span<const std::size_t> counts,
                                     double epsilon = kDefaultSmoothing);

PixelHistogram image_pixel_histogram(const Raster& image, double epsilon = kDefaultSmoothing);
/// From a preprocessed [3, H, W] tensor; values are mapped back to 0..255
/// and rounded to the nearest intensity.
PixelHistogram image_pixel_histogram(const Tensor& image, double epsilon = kDefaultSmoothing);

PixelHistogram dataset_pixel_histogram(const Dataset& dataset, double epsilon = kDefaultSmoothing);
PixelHistogram dataset_pixel_histogram(const Dataset& dataset, std::span<const std::size_t> indices,
                                       double epsilon = kDefaultSmoothing);
PixelHistogram dataset_pixel_histogram(std::span<const Raster> images,
                                       double epsilon = kDefaultSmoothing);

/// sum_x P(x) ln(P(x) / Q(x)); bins with P(x) = 0 contribute nothing.
/// Throws on length mismatch or when Q(x) = 0 where P(x) > 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(const PixelHistogram& p, const PixelHistogram& q);

struct OutlierScore {
  std::string id;
  double score = 0.0;
};

/// Per-sample KL scores against one reference histogram, sorted by
/// descending score with ties in ascending identifier order.
struct OutlierScoreTable {
  std::vector<OutlierScore> entries;
  std::string reference;
};

OutlierScoreTable rank_outliers(const Dataset& dataset, const PixelHistogram& reference,
                                std::string reference_name = "dataset");

/// ceil(fraction * n), immune to representation error in the product.
std::size_t top_fraction_count(std::size_t n, double fraction);

/// Identifiers of the ceil(fraction * N) highest-scoring entries.
std::vector<std::string> select_top_fraction(const OutlierScoreTable& table, double fraction);

/// Equal-width histogram of activation values.
struct FeatureHistogram {
  std::vector<double> edges;   // bins + 1, strictly increasing
  std::vector<double> masses;  // sums to 1
  std::string layer;
  double min_value = 0.0;
  double max_value = 0.0;
};

/// Bins `values` on [lo, hi]. A degenerate range is widened to lo - 0.5 .. hi + 0.5.
FeatureHistogram feature_histogram(std::span<const double> values, double lo, double hi,
                                   std::size_t bin_count, std::string layer,
                                   double epsilon = kDefaultSmoothing);

/// Histogram of one layer's activations over a dataset, on its own range.
FeatureHistogram activation_histogram(const Model& model, const Dataset& dataset,
                                      const std::string& layer, std::size_t bin_count = 256,
                                      double epsilon = kDefaultSmoothing);

/// Histograms of two datasets on shared edges spanning their joint range.
std::pair<FeatureHistogram, FeatureHistogram> activation_histograms(
    const Model& model, const Dataset& first, const Dataset& second, const std::string& layer,
    std::size_t bin_count = 256, double epsilon = kDefaultSmoothing);

/// Requires identical edges.
double kl_divergence(const FeatureHistogram& p, const FeatureHistogram& q);

/// Outlier manifest: a `#` header line with tab-separated key=value fields
/// (reference, fraction, source), then `identifier<TAB>score` rows with
/// 12 significant digits.
struct OutlierManifest {
  std::string reference;
  std::string source;
  double fraction = 0.2;
  std::vector<OutlierScore> entries;
};

void write_manifest(const std::filesystem::path& path, const OutlierManifest& manifest);
OutlierManifest read_manifest(const std::filesystem::path& path);

}  // namespace oodf
