#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "oodf/distshift.hpp"
#include "oodf/error.hpp"
#include "oodf/synthetic.hpp"
#include "support.hpp"

using namespace oodf;

namespace {

// Independent reference: smoothed histogram straight from raster bytes.
std::vector<double> reference_histogram(const std::vector<const Raster*>& images, double eps) {
  std::vector<double> counts(256, 0.0);
  double total = 0;
  for (const Raster* r : images) {
    for (std::uint8_t v : r->rgb) counts[v] += 1;
    total += static_cast<double>(r->rgb.size());
  }
  for (double& c : counts) c = (c / total + eps) / (1 + 256 * eps);
  return counts;
}

double reference_kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) s += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return s;
}

Dataset corpus_dataset(const std::vector<std::pair<std::string, Raster>>& corpus) {
  Dataset d;
  for (const auto& [name, raster] : corpus) {
    d.samples.push_back(Sample{name, preprocess(raster, raster.width), std::nullopt,
                               Role::kOutlierExposure});
  }
  return d;
}

}  // namespace

TEST_CASE("kl divergence hand value and errors") {
  const double p[] = {0.5, 0.5};
  const double q[] = {0.25, 0.75};
  CHECK(std::abs(kl_divergence(p, q) - 0.5 * std::log(4.0 / 3.0)) < 1e-15);
  CHECK(std::abs(kl_divergence(p, q) - 0.143841) < 1e-6);
  CHECK(kl_divergence(p, p) == 0.0);

  const double zero_p[] = {1.0, 0.0};
  const double zero_q[] = {0.0, 1.0};
  CHECK(kl_divergence(zero_p, p) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(kl_divergence(p, zero_q), ValueError);
  const double three[] = {0.2, 0.3, 0.5};
  CHECK_THROWS_AS(kl_divergence(p, three), ShapeError);
}

TEST_CASE("kl divergence is non-negative and zero on identical inputs") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + trial % 30;
    std::vector<double> p(n), q(n);
    double sp = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sp += (p[i] = u(rng));
      sq += (q[i] = u(rng) + 1e-3);
    }
    for (std::size_t i = 0; i < n; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    CHECK(kl_divergence(p, q) >= 0.0);
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(std::abs(kl_divergence(p, q) - reference_kl(p, q)) < 1e-12);
  }
}

TEST_CASE("pixel histograms count every channel") {
  Raster r(2, 1);
  r.rgb = {0, 0, 255, 10, 10, 10};
  const PixelHistogram h = image_pixel_histogram(r, 0.0);
  CHECK(h.count == 6);
  CHECK(h.bins[0] == doctest::Approx(2.0 / 6));
  CHECK(h.bins[10] == doctest::Approx(3.0 / 6));
  CHECK(h.bins[255] == doctest::Approx(1.0 / 6));
  CHECK(h.mean_intensity() == doctest::Approx((255.0 + 30.0) / 6));

  const PixelHistogram s = image_pixel_histogram(r);
  CHECK(std::accumulate(s.bins.begin(), s.bins.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  for (double b : s.bins) CHECK(b > 0.0);
  CHECK(s.bins == reference_histogram({&r}, kDefaultSmoothing));

  const std::size_t short_counts[] = {1, 2};
  CHECK_THROWS_AS(histogram_from_counts(short_counts), ShapeError);
  std::vector<std::size_t> none(256, 0);
  CHECK_THROWS_AS(histogram_from_counts(none), ValueError);
}

TEST_CASE("tensor histograms recover the raster intensities") {
  ImageCorpusSpec spec;
  spec.count_class0 = 3;
  spec.count_class1 = 3;
  spec.side = 16;
  for (const auto& [name, raster] : gen_image_corpus(spec)) {
    CAPTURE(name);
    CHECK(image_pixel_histogram(preprocess(raster, 16)).bins == image_pixel_histogram(raster).bins);
  }
}

TEST_CASE("dataset histograms pool their images") {
  ImageCorpusSpec spec;
  spec.count_class0 = 4;
  spec.count_class1 = 2;
  spec.side = 8;
  const auto corpus = gen_image_corpus(spec);
  std::vector<Raster> rasters;
  std::vector<const Raster*> ptrs;
  for (const auto& c : corpus) rasters.push_back(c.second);
  for (const auto& r : rasters) ptrs.push_back(&r);
  const auto expect = reference_histogram(ptrs, kDefaultSmoothing);
  const PixelHistogram from_rasters = dataset_pixel_histogram(rasters);
  for (std::size_t i = 0; i < 256; ++i) CHECK(from_rasters.bins[i] == doctest::Approx(expect[i]).epsilon(1e-13));

  const Dataset d = corpus_dataset(corpus);
  CHECK(dataset_pixel_histogram(d).bins == from_rasters.bins);
  const std::size_t pick[] = {1, 4};
  const auto sub = reference_histogram({&rasters[1], &rasters[4]}, kDefaultSmoothing);
  const PixelHistogram picked = dataset_pixel_histogram(d, pick);
  for (std::size_t i = 0; i < 256; ++i) CHECK(picked.bins[i] == doctest::Approx(sub[i]).epsilon(1e-13));
  CHECK_THROWS_AS(dataset_pixel_histogram(Dataset{}), ValueError);
}

TEST_CASE("top fraction count is a ceiling") {
  CHECK(top_fraction_count(50, 0.2) == 10);
  CHECK(top_fraction_count(1, 0.2) == 1);
  CHECK(top_fraction_count(7, 0.2) == 2);
  CHECK(top_fraction_count(5, 0.2) == 1);
  CHECK(top_fraction_count(100, 1.0) == 100);
  for (std::size_t n = 1; n <= 1000; ++n) {
    CHECK(top_fraction_count(n, 0.2) == (n + 4) / 5);  // integer ceil(n / 5)
  }
  CHECK_THROWS_AS(top_fraction_count(10, 0.0), ValueError);
  CHECK_THROWS_AS(top_fraction_count(10, 1.5), ValueError);
}

TEST_CASE("ranking breaks ties by identifier") {
  Raster a(2, 2, 100), b(2, 2, 100), c(2, 2, 200);
  Dataset d;
  d.samples.push_back({"b", preprocess(b, 2), std::nullopt, Role::kOutlierExposure});
  d.samples.push_back({"c", preprocess(c, 2), std::nullopt, Role::kOutlierExposure});
  d.samples.push_back({"a", preprocess(a, 2), std::nullopt, Role::kOutlierExposure});
  Raster ref(2, 2, 100);
  const auto table = rank_outliers(d, image_pixel_histogram(ref), "ref");
  REQUIRE(table.entries.size() == 3);
  CHECK(table.reference == "ref");
  CHECK(table.entries[0].id == "c");
  CHECK(table.entries[1].id == "a");
  CHECK(table.entries[2].id == "b");
  CHECK(table.entries[1].score == table.entries[2].score);
  CHECK(select_top_fraction(table, 0.2) == std::vector<std::string>{"c"});
}

TEST_CASE("top-fraction selection matches brute-force sorting") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    ImageCorpusSpec spec;
    spec.seed = seed;
    spec.side = 8;
    spec.count_class0 = 5 + 7 * seed;
    spec.count_class1 = 3 + 3 * seed;
    const auto corpus = gen_image_corpus(spec);
    ImageCorpusSpec ref_spec = spec;
    ref_spec.seed = seed + 100;
    ref_spec.count_class0 = 20;
    ref_spec.count_class1 = 0;
    std::vector<Raster> refs;
    std::vector<const Raster*> ref_ptrs;
    for (const auto& c : gen_image_corpus(ref_spec)) refs.push_back(c.second);
    for (const auto& r : refs) ref_ptrs.push_back(&r);
    const auto reference = reference_histogram(ref_ptrs, kDefaultSmoothing);

    std::vector<std::pair<double, std::string>> brute;
    for (const auto& [name, raster] : corpus) {
      brute.emplace_back(reference_kl(reference_histogram({&raster}, kDefaultSmoothing), reference),
                         name);
    }
    std::sort(brute.begin(), brute.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    const std::size_t k = (corpus.size() * 2 + 9) / 10;  // ceil(0.2 N)

    const auto table = rank_outliers(corpus_dataset(corpus), dataset_pixel_histogram(refs));
    const auto picked = select_top_fraction(table, 0.2);
    CAPTURE(seed);
    REQUIRE(picked.size() == k);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(picked[i] == brute[i].second);
      CHECK(table.entries[i].score == doctest::Approx(brute[i].first).epsilon(1e-10));
    }
  }
}

TEST_CASE("feature histograms") {
  const double values[] = {0.0, 0.1, 0.5, 0.99, 1.0};
  const auto h = feature_histogram(values, 0.0, 1.0, 4, "tanh1", 0.0);
  REQUIRE(h.edges.size() == 5);
  CHECK(h.edges[2] == 0.5);
  CHECK(h.masses == std::vector<double>{0.4, 0.0, 0.2, 0.4});
  CHECK(h.min_value == 0.0);
  CHECK(h.max_value == 1.0);
  CHECK(h.layer == "tanh1");

  const double flat[] = {3.0, 3.0};
  const auto d = feature_histogram(flat, 3.0, 3.0, 2, "x", 0.0);
  CHECK(d.edges.front() == 2.5);
  CHECK(d.edges.back() == 3.5);
  CHECK(d.masses == std::vector<double>{0.0, 1.0});

  CHECK_THROWS_AS(feature_histogram(values, 0.0, 0.5, 4, "x"), ValueError);
  CHECK_THROWS_AS(feature_histogram(values, 0.0, 1.0, 0, "x"), ValueError);
  const auto other = feature_histogram(values, 0.0, 2.0, 4, "x");
  CHECK_THROWS_AS(kl_divergence(h, other), ShapeError);
  CHECK(kl_divergence(other, other) == 0.0);
}

TEST_CASE("activation histograms share edges") {
  const Model m = build_mlp(MlpConfig{2, 1, 8, 2}, 5);
  const Dataset a = gen_disk_square(60, 1);
  const Dataset b = gen_square_band(60, 1.5, 6.0, LabelRule::disk(), 2);
  const auto [ha, hb] = activation_histograms(m, a, b, "fc1", 32);
  CHECK(ha.edges == hb.edges);
  CHECK(std::accumulate(ha.masses.begin(), ha.masses.end(), 0.0) == doctest::Approx(1.0));
  CHECK(kl_divergence(ha, hb) > 0.0);
  const auto own = activation_histogram(m, a, "fc1", 32);
  CHECK(own.edges.front() == own.min_value);
  CHECK(own.edges.back() == own.max_value);
  CHECK_THROWS_AS(activation_histogram(m, Dataset{}, "fc1"), ValueError);
}

TEST_CASE("manifest round trip and diagnostics") {
  test::TempDir dir("manifest");
  OutlierManifest m;
  m.reference = "utkface";
  m.source = "fairface";
  m.fraction = 0.2;
  m.entries = {{"b.png", 0.123456789012345}, {"a.png", 1e-9}};
  write_manifest(dir / "m.tsv", m);
  const std::string text = test::slurp(dir / "m.tsv");
  CHECK(text.rfind("# reference=utkface\t", 0) == 0);
  CHECK(text.find("b.png\t0.123456789012\n") != std::string::npos);

  const OutlierManifest back = read_manifest(dir / "m.tsv");
  CHECK(back.reference == "utkface");
  CHECK(back.source == "fairface");
  CHECK(back.fraction == 0.2);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].id == "b.png");
  CHECK(back.entries[1].score == 1e-9);

  test::spit(dir / "bad.tsv", "# reference=x\tfraction=0.2\tsource=y\nok\t1\nbroken line\n");
  try {
    read_manifest(dir / "bad.tsv");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("bad.tsv:3") != std::string::npos);
  }
  test::spit(dir / "nohdr.tsv", "a\t1\n");
  CHECK_THROWS_AS(read_manifest(dir / "nohdr.tsv"), IoError);
  CHECK_THROWS_AS(read_manifest(dir / "missing.tsv"), IoError);
}
