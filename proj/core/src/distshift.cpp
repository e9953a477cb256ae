#include "oodf/distshift.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "oodf/error.hpp"

namespace oodf {

namespace {

void count_tensor(const Tensor& image, std::vector<std::size_t>& counts) {
  for (double v : image.data()) {
    const double level = std::clamp(std::round(to_intensity(v)), 0.0, 255.0);
    ++counts[static_cast<std::size_t>(level)];
  }
}

std::vector<double> activations_of(const Model& model, const Dataset& dataset,
                                   const std::string& layer) {
  if (dataset.empty()) throw ValueError("activation histogram: empty dataset");
  constexpr std::size_t kChunk = 64;
  std::vector<double> values;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < dataset.size(); begin += kChunk) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(dataset.size(), begin + kChunk); ++i) idx.push_back(i);
    const Tensor acts = extract_activations(model, dataset.inputs(idx), layer);
    values.insert(values.end(), acts.data().begin(), acts.data().end());
  }
  return values;
}

std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

double PixelHistogram::mean_intensity() const noexcept {
  double mean = 0.0;
  for (std::size_t b = 0; b < bins.size(); ++b) mean += static_cast<double>(b) * bins[b];
  return mean;
}

PixelHistogram histogram_from_counts(std::span<const std::size_t> counts, double epsilon) {
  if (counts.size() != kPixelBins) {
    throw ShapeError("pixel histogram: expected 256 bins, got " + std::to_string(counts.size()));
  }
  if (!(epsilon >= 0)) throw ValueError("pixel histogram: smoothing must be non-negative");
  PixelHistogram h;
  h.smoothing_epsilon = epsilon;
  for (std::size_t c : counts) h.count += c;
  if (h.count == 0) throw ValueError("pixel histogram: no pixels");
  const double total = static_cast<double>(h.count);
  const double norm = 1.0 + epsilon * static_cast<double>(kPixelBins);
  h.bins.resize(kPixelBins);
  for (std::size_t b = 0; b < kPixelBins; ++b) {
    h.bins[b] = (static_cast<double>(counts[b]) / total + epsilon) / norm;
  }
  return h;
}

PixelHistogram image_pixel_histogram(const Raster& image, double epsilon) {
  std::vector<std::size_t> counts(kPixelBins, 0);
  for (std::uint8_t v : image.rgb) ++counts[v];
  return histogram_from_counts(counts, epsilon);
}

PixelHistogram image_pixel_histogram(const Tensor& image, double epsilon) {
  std::vector<std::size_t> counts(kPixelBins, 0);
  count_tensor(image, counts);
  return histogram_from_counts(counts, epsilon);
}

PixelHistogram dataset_pixel_histogram(const Dataset& dataset, double epsilon) {
  if (dataset.empty()) throw ValueError("dataset_pixel_histogram: empty dataset");
  std::vector<std::size_t> counts(kPixelBins, 0);
  for (const Sample& s : dataset.samples) count_tensor(s.input, counts);
  return histogram_from_counts(counts, epsilon);
}

PixelHistogram dataset_pixel_histogram(const Dataset& dataset,
                                       std::span<const std::size_t> indices, double epsilon) {
  if (indices.empty()) throw ValueError("dataset_pixel_histogram: empty selection");
  std::vector<std::size_t> counts(kPixelBins, 0);
  for (std::size_t i : indices) count_tensor(dataset.samples.at(i).input, counts);
  return histogram_from_counts(counts, epsilon);
}

PixelHistogram dataset_pixel_histogram(std::span<const Raster> images, double epsilon) {
  if (images.empty()) throw ValueError("dataset_pixel_histogram: empty dataset");
  std::vector<std::size_t> counts(kPixelBins, 0);
  for (const Raster& r : images) {
    for (std::uint8_t v : r.rgb) ++counts[v];
  }
  return histogram_from_counts(counts, epsilon);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ShapeError("kl_divergence: " + std::to_string(p.size()) + " bins vs " +
                     std::to_string(q.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0 || q[i] < 0) throw ValueError("kl_divergence: negative mass");
    if (p[i] == 0) continue;
    if (q[i] == 0) {
      throw ValueError("kl_divergence: Q has zero mass at bin " + std::to_string(i) +
                       " where P does not");
    }
    sum += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can leave a tiny negative total for near-identical inputs.
  return std::max(sum, 0.0);
}

double kl_divergence(const PixelHistogram& p, const PixelHistogram& q) {
  return kl_divergence(p.bins, q.bins);
}

OutlierScoreTable rank_outliers(const Dataset& dataset, const PixelHistogram& reference,
                                std::string reference_name) {
  if (dataset.empty()) throw ValueError("rank_outliers: empty dataset");
  OutlierScoreTable table;
  table.reference = std::move(reference_name);
  table.entries.reserve(dataset.size());
  for (const Sample& s : dataset.samples) {
    const PixelHistogram h = image_pixel_histogram(s.input, reference.smoothing_epsilon);
    table.entries.push_back({s.id, kl_divergence(h, reference)});
  }
  std::sort(table.entries.begin(), table.entries.end(),
            [](const OutlierScore& a, const OutlierScore& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.id < b.id;
            });
  return table;
}

std::size_t top_fraction_count(std::size_t n, double fraction) {
  if (!(fraction > 0 && fraction <= 1)) {
    throw ValueError("select_top_fraction: fraction must lie in (0, 1], got " +
                     std::to_string(fraction));
  }
  const double exact = fraction * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
  return std::clamp<std::size_t>(k, n ? 1 : 0, n);
}

std::vector<std::string> select_top_fraction(const OutlierScoreTable& table, double fraction) {
  const std::size_t k = top_fraction_count(table.entries.size(), fraction);
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(table.entries[i].id);
  return out;
}

FeatureHistogram feature_histogram(std::span<const double> values, double lo, double hi,
                                   std::size_t bin_count, std::string layer, double epsilon) {
  if (bin_count == 0) throw ValueError("feature histogram: bin_count must be positive");
  if (values.empty()) throw ValueError("feature histogram: no values");
  if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ValueError("feature histogram: invalid range");
  }
  FeatureHistogram h;
  h.layer = std::move(layer);
  h.min_value = *std::min_element(values.begin(), values.end());
  h.max_value = *std::max_element(values.begin(), values.end());
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bin_count);
  h.edges.resize(bin_count + 1);
  for (std::size_t i = 0; i <= bin_count; ++i) {
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bin_count);
  }
  h.edges.back() = hi;
  std::vector<double> counts(bin_count, 0.0);
  for (double v : values) {
    if (v < lo || v > hi) throw ValueError("feature histogram: value outside the binning range");
    auto b = static_cast<std::size_t>((v - lo) / width);
    ++counts[std::min(b, bin_count - 1)];
  }
  const double total = static_cast<double>(values.size());
  const double norm = 1.0 + epsilon * static_cast<double>(bin_count);
  h.masses.resize(bin_count);
  for (std::size_t b = 0; b < bin_count; ++b) h.masses[b] = (counts[b] / total + epsilon) / norm;
  return h;
}

FeatureHistogram activation_histogram(const Model& model, const Dataset& dataset,
                                      const std::string& layer, std::size_t bin_count,
                                      double epsilon) {
  const auto values = activations_of(model, dataset, layer);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return feature_histogram(values, *lo, *hi, bin_count, layer, epsilon);
}

std::pair<FeatureHistogram, FeatureHistogram> activation_histograms(
    const Model& model, const Dataset& first, const Dataset& second, const std::string& layer,
    std::size_t bin_count, double epsilon) {
  const auto a = activations_of(model, first, layer);
  const auto b = activations_of(model, second, layer);
  const double lo = std::min(*std::min_element(a.begin(), a.end()),
                             *std::min_element(b.begin(), b.end()));
  const double hi = std::max(*std::max_element(a.begin(), a.end()),
                             *std::max_element(b.begin(), b.end()));
  return {feature_histogram(a, lo, hi, bin_count, layer, epsilon),
          feature_histogram(b, lo, hi, bin_count, layer, epsilon)};
}

double kl_divergence(const FeatureHistogram& p, const FeatureHistogram& q) {
  if (p.edges != q.edges) {
    throw ShapeError("kl_divergence: feature histograms do not share bin edges");
  }
  return kl_divergence(p.masses, q.masses);
}

void write_manifest(const std::filesystem::path& path, const OutlierManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << "# reference=" << manifest.reference << "\tfraction=" << format_score(manifest.fraction)
      << "\tsource=" << manifest.source << '\n';
  for (const OutlierScore& e : manifest.entries) {
    out << e.id << '\t' << format_score(e.score) << '\n';
  }
}

OutlierManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  OutlierManifest m;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw IoError(path.string() + ":1: missing manifest header");
  }
  std::istringstream header(line.substr(2));
  std::string field;
  while (std::getline(header, field, '\t')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "reference") m.reference = value;
    if (key == "source") m.source = value;
    if (key == "fraction") m.fraction = std::stod(value);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected id<TAB>score");
    }
    double score = 0.0;
    const char* begin = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    auto [ptr, ec] = std::from_chars(begin, end, score);
    if (ec != std::errc() || ptr != end) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad score");
    }
    m.entries.push_back({line.substr(0, tab), score});
  }
  return m;
}

}  // namespace oodf
