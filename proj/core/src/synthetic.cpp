#include "oodf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "oodf/error.hpp"

namespace oodf {

namespace {

std::string point_id(const char* prefix, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%07zu", prefix, index);
  return buf;
}

Sample point_sample(std::string id, double x1, double x2, const LabelRule& rule, Role role) {
  return {std::move(id), Tensor(Shape{2}, {x1, x2}), rule(x1, x2), role};
}

// Lower-triangular factor of a PSD 2x2 covariance.
std::array<double, 3> cholesky2(const std::array<double, 4>& cov) {
  const double a = cov[0], b = cov[1], c = cov[3];
  constexpr double kTol = 1e-12;
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c) || cov[2] != b) {
    throw ValueError("gaussian: covariance must be finite and symmetric");
  }
  if (a < 0 || c < 0 || a * c - b * b < -kTol * std::max(1.0, a * c)) {
    throw ValueError("gaussian: covariance must be positive semi-definite");
  }
  const double l11 = std::sqrt(a);
  double l21 = 0.0;
  if (l11 > 0) {
    l21 = b / l11;
  } else if (std::abs(b) > kTol) {
    throw ValueError("gaussian: covariance must be positive semi-definite");
  }
  return {l11, l21, std::sqrt(std::max(0.0, c - l21 * l21))};
}

}  // namespace

Dataset gen_disk_square(std::size_t count, std::uint64_t seed, double half_width, Role role) {
  if (count == 0) throw ValueError("gen_disk_square: count must be positive");
  if (!(half_width > 0)) throw ValueError("gen_disk_square: half_width must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-half_width, half_width);
  Dataset out;
  out.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x1 = coord(rng);
    const double x2 = coord(rng);
    out.samples.push_back(point_sample(point_id("sq", i), x1, x2, LabelRule::disk(), role));
  }
  return out;
}

Dataset gen_mesh_grid(double lo, double hi, std::size_t points_per_axis, LabelRule rule,
                      Role role) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ValueError("gen_mesh_grid: bounds must satisfy lo < hi");
  }
  if (points_per_axis < 2) throw ValueError("gen_mesh_grid: need at least 2 points per axis");
  const auto coord = [&](std::size_t i) {
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points_per_axis - 1);
  };
  Dataset out;
  out.samples.reserve(points_per_axis * points_per_axis);
  for (std::size_t iy = 0; iy < points_per_axis; ++iy) {
    for (std::size_t ix = 0; ix < points_per_axis; ++ix) {
      out.samples.push_back(point_sample(point_id("grid", iy * points_per_axis + ix), coord(ix),
                                         coord(iy), rule, role));
    }
  }
  return out;
}

Dataset gen_gaussian(const GaussianComponent& component, std::size_t count, LabelRule rule,
                     std::uint64_t seed, Role role) {
  return gen_gaussian_mixture({{component}, {1.0}, count, rule}, seed, role);
}

Dataset gen_gaussian_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed, Role role) {
  if (spec.count == 0) throw ValueError("gaussian mixture: count must be positive");
  if (spec.components.empty() || spec.components.size() != spec.weights.size()) {
    throw ValueError("gaussian mixture: need one weight per component");
  }
  double total = 0.0;
  for (double w : spec.weights) {
    if (!(w >= 0)) throw ValueError("gaussian mixture: weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValueError("gaussian mixture: weights must sum to 1");

  std::vector<std::array<double, 3>> factors;
  for (const auto& c : spec.components) factors.push_back(cholesky2(c.covariance));
  std::vector<double> cumulative(spec.weights.size());
  std::partial_sum(spec.weights.begin(), spec.weights.end(), cumulative.begin());

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pick(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset out;
  out.samples.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const double u = pick(rng);
    std::size_t k = 0;
    while (k + 1 < cumulative.size() && (u >= cumulative[k] || spec.weights[k] == 0.0)) ++k;
    const double z1 = normal(rng);
    const double z2 = normal(rng);
    const auto& f = factors[k];
    const auto& m = spec.components[k].mean;
    const double x1 = m[0] + f[0] * z1;
    const double x2 = m[1] + f[1] * z1 + f[2] * z2;
    out.samples.push_back(point_sample(point_id("gm", i), x1, x2, spec.rule, role));
  }
  return out;
}

Dataset gen_square_band(std::size_t count, double inner, double outer, LabelRule rule,
                        std::uint64_t seed, Role role) {
  if (count == 0) throw ValueError("gen_square_band: count must be positive");
  if (!(inner >= 0 && inner < outer)) {
    throw ValueError("gen_square_band: need 0 <= inner < outer");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-outer, outer);
  Dataset out;
  out.samples.reserve(count);
  while (out.samples.size() < count) {
    const double x1 = coord(rng);
    const double x2 = coord(rng);
    if (std::max(std::abs(x1), std::abs(x2)) <= inner) continue;
    out.samples.push_back(point_sample(point_id("band", out.samples.size()), x1, x2, rule, role));
  }
  return out;
}

std::vector<std::pair<std::string, Raster>> gen_image_corpus(const ImageCorpusSpec& spec) {
  if (spec.side == 0 || spec.count_class0 + spec.count_class1 == 0) {
    throw ValueError("image corpus: need a positive side and at least one image");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<std::string, Raster>> out;
  const std::size_t total = spec.count_class0 + spec.count_class1;
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t label = i < spec.count_class0 ? 0 : 1;
    const double mean = label == 0 ? spec.mean_class0 : spec.mean_class1;
    const double brightness = mean + spec.brightness_sd * unit(rng);
    Raster r(spec.side, spec.side);
    for (auto& px : r.rgb) {
      px = static_cast<std::uint8_t>(
          std::clamp(std::round(brightness + spec.pixel_sd * unit(rng)), 0.0, 255.0));
    }
    char name[96];
    std::snprintf(name, sizeof(name), "%d_%zu_%zu_%s%05zu.raw", 20 + static_cast<int>(i % 40),
                  label, i % 5, spec.tag.c_str(), i);
    out.emplace_back(name, std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

void write_image_corpus(const std::filesystem::path& dir, const ImageCorpusSpec& spec, bool png) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, raster] : gen_image_corpus(spec)) {
    if (png) {
      write_png(dir / (name.substr(0, name.size() - 4) + ".png"), raster);
    } else {
      write_raw(dir / name, raster);
    }
  }
}

}  // namespace oodf
