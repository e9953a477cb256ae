#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "oodf/error.hpp"
#include "oodf/metrics.hpp"
#include "support.hpp"

using namespace oodf;

namespace {

// Probability that a random positive outscores a random negative, ties half.
double mann_whitney(const std::vector<double>& s, const std::vector<std::size_t>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("confusion counts and derived scores") {
  const std::size_t pred[] = {1, 1, 0, 0, 1, 0};
  const std::size_t truth[] = {1, 0, 0, 1, 1, 0};
  const ConfusionMatrix cm = confusion(pred, truth);
  CHECK(cm.tp == 2);
  CHECK(cm.fp == 1);
  CHECK(cm.fn == 1);
  CHECK(cm.tn == 2);
  const Scores s = scores_from_confusion(cm);
  CHECK(*s.precision == doctest::Approx(2.0 / 3));
  CHECK(*s.recall == doctest::Approx(2.0 / 3));
  CHECK(*s.f1 == doctest::Approx(2.0 / 3));
  CHECK(s.accuracy == doctest::Approx(4.0 / 6));

  const std::size_t three[] = {2};
  const std::size_t one[] = {0};
  CHECK_THROWS_AS(confusion(three, one), ValueError);
  CHECK_THROWS_AS(confusion(pred, one), ShapeError);
  CHECK_THROWS_AS(scores_from_confusion(ConfusionMatrix{}), ValueError);
}

TEST_CASE("undefined scores stay undefined") {
  ConfusionMatrix none_predicted{0, 0, 3, 5, 1};
  const Scores s = scores_from_confusion(none_predicted);
  CHECK_FALSE(s.precision);
  CHECK(*s.recall == 0.0);
  CHECK_FALSE(s.f1);
  CHECK(format_metric(s.precision) == "NA");
  CHECK(format_metric(0.5) == "0.500000");

  ConfusionMatrix no_positives{0, 2, 0, 5, 1};
  CHECK_FALSE(scores_from_confusion(no_positives).recall);
  ConfusionMatrix all_wrong{0, 2, 3, 0, 1};
  const Scores w = scores_from_confusion(all_wrong);
  CHECK(*w.precision == 0.0);
  CHECK_FALSE(w.f1);
}

TEST_CASE("swapping the positive class exchanges precision and recall roles") {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> p(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      p[i] = coin(rng);
      y[i] = coin(rng);
    }
    const ConfusionMatrix pos1 = confusion(p, y, 1);
    const ConfusionMatrix pos0 = confusion(p, y, 0);
    CHECK(pos0 == pos1.swapped());
    CHECK(pos1.swapped().swapped() == pos1);
    const Scores a = scores_from_confusion(pos1), b = scores_from_confusion(pos0);
    CHECK(a.accuracy == b.accuracy);

    std::size_t correct = 0;
    for (std::size_t i = 0; i < 50; ++i) correct += p[i] == y[i];
    CHECK(a.accuracy == static_cast<double>(correct) / 50.0);
  }
}

TEST_CASE("roc curve hand example with ties") {
  const double s[] = {0.9, 0.8, 0.8, 0.3};
  const std::size_t y[] = {1, 0, 1, 0};
  const RocResult r = roc_auc(s, y);
  CHECK(r.curve.thresholds.size() == 4);
  CHECK(std::isinf(r.curve.thresholds[0]));
  CHECK(r.curve.thresholds[2] == 0.8);
  CHECK(r.curve.fpr == std::vector<double>{0.0, 0.0, 0.5, 1.0});
  CHECK(r.curve.tpr == std::vector<double>{0.0, 0.5, 1.0, 1.0});
  CHECK(r.auroc == doctest::Approx(0.875));
  CHECK(r.auroc == doctest::Approx(mann_whitney({0.9, 0.8, 0.8, 0.3}, {1, 0, 1, 0})));

  const std::size_t single[] = {1, 1, 1, 1};
  CHECK_THROWS_AS(roc_auc(s, single), ValueError);
  const double bad[] = {0.1, std::numeric_limits<double>::quiet_NaN(), 0.2, 0.3};
  CHECK_THROWS_AS(roc_auc(bad, y), ValueError);
}

TEST_CASE("auroc agrees with the Mann-Whitney statistic") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(2, 300);
  std::uniform_int_distribution<int> coarse(0, 20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = size(rng);
    std::vector<double> s(n);
    std::vector<std::size_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = u(rng) < 0.3 ? 1 : 0;
      s[i] = trial % 2 ? coarse(rng) / 20.0 : u(rng);  // odd trials are tie-heavy
    }
    y[0] = 0;
    y[1] = 1;
    CAPTURE(trial);
    CHECK(std::abs(roc_auc(s, y).auroc - mann_whitney(s, y)) < 1e-9);
    // Swapping the positive class mirrors the curve.
    std::vector<double> flipped(n);
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1.0 - s[i];
    CHECK(std::abs(roc_auc(flipped, y, 0).auroc - roc_auc(s, y).auroc) < 1e-12);
  }
}

TEST_CASE("evaluate bundles everything") {
  const std::size_t p[] = {1, 0, 1};
  const double sc[] = {0.7, 0.2, 0.6};
  const std::size_t y[] = {1, 0, 0};
  const MetricsReport r = evaluate(p, sc, y);
  CHECK(*r.precision == 0.5);
  CHECK(*r.recall == 1.0);
  CHECK(*r.auroc == 1.0);
  const std::size_t one_class[] = {1, 1, 1};
  const MetricsReport u = evaluate(p, sc, one_class);
  CHECK_FALSE(u.auroc);
  CHECK(u.roc.fpr.empty());
}

TEST_CASE("csv writers") {
  test::TempDir dir("metrics");
  const std::size_t p[] = {1, 0, 1, 1};
  const double sc[] = {0.7, 0.2, 0.6, 0.55};
  const std::size_t y[] = {1, 0, 0, 1};
  const MetricsReport r = evaluate(p, sc, y);

  const std::string names[] = {"Male", "Female"};
  write_confusion_csv(dir / "c.csv", r.confusion, names);
  CHECK(test::slurp(dir / "c.csv") ==
        "predicted,actual,count\nMale,Male,1\nMale,Female,0\nFemale,Male,1\nFemale,Female,2\n");
  write_confusion_csv(dir / "c2.csv", r.confusion);
  CHECK(test::slurp(dir / "c2.csv").find("\n1,1,2\n") != std::string::npos);

  write_metrics_csv(dir / "m.csv", r);
  CHECK(test::slurp(dir / "m.csv") ==
        "precision,recall,accuracy,f1,auroc\n0.666667,1.000000,0.750000,0.800000,0.750000\n");

  write_roc_csv(dir / "r.csv", r.roc);
  const std::string roc = test::slurp(dir / "r.csv");
  CHECK(roc.rfind("threshold,fpr,tpr\ninf,0,0\n", 0) == 0);

  const std::vector<PredictionRow> rows{{"a,b.png", 1, 1, 0.7}, {"c.png", 0, 1, 0.5000000000000001}};
  write_predictions_csv(dir / "p.csv", rows);
  const auto back = read_predictions_csv(dir / "p.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a,b.png");
  CHECK(back[1].p_class1 == 0.5000000000000001);
  CHECK(back[1].predicted == 1);
  test::spit(dir / "bad.csv", "id,label,predicted,p_class1\nx,1,2\n");
  CHECK_THROWS_AS(read_predictions_csv(dir / "bad.csv"), IoError);
}

TEST_CASE("published gender confusion matrix reproduces its accuracy") {
  std::ifstream in(std::filesystem::path(OODF_FIXTURE_DIR) / "utkface_fairface_confusion.csv");
  REQUIRE(in);
  std::string line;
  std::getline(in, line);
  ConfusionMatrix cm;  // Female is the positive class
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    const std::string pred = line.substr(0, c1), actual = line.substr(c1 + 1, c2 - c1 - 1);
    const std::size_t count = std::stoul(line.substr(c2 + 1));
    if (pred == "Female") (actual == "Female" ? cm.tp : cm.fp) = count;
    else (actual == "Female" ? cm.fn : cm.tn) = count;
  }
  CHECK(cm.total() == 86743);
  const Scores s = scores_from_confusion(cm);
  CHECK(s.accuracy == doctest::Approx(0.694).epsilon(0.001));
  CHECK(std::abs(s.accuracy - 0.69) <= 0.005);
  CHECK(s.accuracy == 60195.0 / 86743.0);
}
