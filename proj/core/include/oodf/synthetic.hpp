#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "oodf/dataset.hpp"
#include "oodf/image_io.hpp"

namespace oodf {

/// Class-1 region of the plane: r_min_sq <= x1^2 + x2^2 <= r_max_sq.
/// The default is the closed disk of radius 2.
struct LabelRule {
  double r_min_sq = 0.0;
  double r_max_sq = 4.0;

  static LabelRule disk() { return {}; }
  static LabelRule annulus(double r_min_sq, double r_max_sq) { return {r_min_sq, r_max_sq}; }

  std::size_t operator()(double x1, double x2) const noexcept {
    const double r2 = x1 * x1 + x2 * x2;
    return (r2 >= r_min_sq && r2 <= r_max_sq) ? 1 : 0;
  }
};

/// 1 iff x1^2 + x2^2 <= 4.
inline std::size_t disk_label(double x1, double x2) noexcept { return LabelRule::disk()(x1, x2); }

/// Uniform points on [-half_width, half_width]^2 labelled by the disk rule.
Dataset gen_disk_square(std::size_t count, std::uint64_t seed, double half_width = 1.5,
                        Role role = Role::kTrain);

/// Cartesian grid over [lo, hi]^2 including both end points, labelled by
/// `rule`. Row-major with x2 varying slowest.
Dataset gen_mesh_grid(double lo, double hi, std::size_t points_per_axis,
                      LabelRule rule = LabelRule::disk(), Role role = Role::kTest);

struct GaussianComponent {
  std::array<double, 2> mean{0.0, 0.0};
  /// Row-major 2x2 covariance; must be symmetric positive semi-definite.
  std::array<double, 4> covariance{1.0, 0.0, 0.0, 1.0};
};

struct GaussianMixtureSpec {
  std::vector<GaussianComponent> components;
  std::vector<double> weights;
  std::size_t count = 0;
  LabelRule rule;
};

/// Single Gaussian: a one-component mixture, so both share a seed stream.
Dataset gen_gaussian(const GaussianComponent& component, std::size_t count, LabelRule rule,
                     std::uint64_t seed, Role role = Role::kTrain);
Dataset gen_gaussian_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed,
                             Role role = Role::kTrain);

/// Uniform points on [-outer, outer]^2 with max(|x1|, |x2|) > inner
/// (rejection sampled), labelled by `rule`.
Dataset gen_square_band(std::size_t count, double inner, double outer, LabelRule rule,
                        std::uint64_t seed, Role role = Role::kOutlierExposure);

/// Synthetic two-class image corpus whose classes differ in brightness.
/// Each image has a per-image brightness drawn from N(mean_c, brightness_sd)
/// plus per-pixel noise N(0, pixel_sd), clamped to [0, 255]. Overlapping
/// class distributions keep the task imperfectly separable.
struct ImageCorpusSpec {
  std::size_t count_class0 = 100;
  std::size_t count_class1 = 100;
  std::size_t side = 32;
  double mean_class0 = 110.0;
  double mean_class1 = 145.0;
  double brightness_sd = 25.0;
  double pixel_sd = 30.0;
  std::uint64_t seed = 0;
  /// Prefix of the free file-name field, so several corpora can share a directory.
  std::string tag = "img";
};

/// Rasters named after the `<age>_<gender>_<race>_<free>.raw` grammar, with
/// the class stored in the gender field. Sorted by name.
std::vector<std::pair<std::string, Raster>> gen_image_corpus(const ImageCorpusSpec& spec);

/// Writes a corpus as .raw (or .png when `png` is set) files into `dir`.
void write_image_corpus(const std::filesystem::path& dir, const ImageCorpusSpec& spec,
                        bool png = false);

}  // namespace oodf
