#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "oodf/config.hpp"
#include "oodf/distshift.hpp"
#include "oodf/error.hpp"
#include "oodf/experiment.hpp"
#include "oodf/synthetic.hpp"
#include "support.hpp"

using namespace oodf;
namespace fs = std::filesystem;

namespace {

std::string error_path(const std::string& json) {
  try {
    parse_config_text(json);
  } catch (const ConfigError& e) {
    return e.key_path();
  }
  return "<accepted>";
}

ExperimentConfig small_toy(const fs::path& out) {
  ExperimentConfig c = parse_config_text(R"({
    "experiment": "toy_example1", "epochs": 3, "batch_size": 32, "learning_rate": 0.01,
    "model": {"hidden_layers": 2, "hidden_width": 16},
    "loss": {"oe_mode": "uniform"},
    "lambda": {"mode": "kl_epoch", "d_kl": 0.5},
    "toy": {"train_count": 200, "oe_count": 150, "grid": {"points_per_axis": 21}}
  })");
  c.output_dir = out;
  return c;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = test::slurp(e.path());
  }
  return out;
}

// Image corpus plus an outlier candidate pool under `root`.
void write_image_fixture(const fs::path& root, std::size_t oe_count) {
  ImageCorpusSpec train;
  train.side = 12;
  train.count_class0 = 20;
  train.count_class1 = 20;
  train.seed = 1;
  write_image_corpus(root / "train", train);
  ImageCorpusSpec test = train;
  test.seed = 2;
  test.count_class0 = 10;
  test.count_class1 = 10;
  write_image_corpus(root / "test", test);
  ImageCorpusSpec oe = train;
  oe.seed = 3;
  oe.count_class0 = oe_count / 2;
  oe.count_class1 = oe_count - oe_count / 2;
  oe.mean_class0 = 60;
  oe.mean_class1 = 200;
  oe.tag = "cand";
  write_image_corpus(root / "oe", oe, true);
}

std::string image_config(const std::string& outliers_extra, const std::string& lambda) {
  return R"({
    "experiment": "image", "epochs": 2, "batch_size": 8,
    "model": {"conv1_out": 4, "conv1_kernel": 3, "conv2_out": 4, "conv2_kernel": 3, "fc_hidden": 8},
    "loss": {"weights": {"mode": "formula"}, "oe_mode": "uniform"},
    "lambda": )" + lambda + R"(,
    "data": {"side": 12, "train": {"dir": "train"}, "test": {"dir": "test"},
             "outliers": {"dir": "oe")" + outliers_extra + R"(}}
  })";
}

}  // namespace

TEST_CASE("config defaults and overrides") {
  const ExperimentConfig c = parse_config_text(R"({"experiment": "toy_example2", "seed": 7})");
  CHECK(c.kind == ExperimentKind::kToyExample2);
  CHECK(c.seed == 7);
  CHECK(c.epochs == 20);
  CHECK(c.batch_size == 16);
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.lambda.mode == LambdaMode::kFixed);
  CHECK(c.lambda.fixed_value == 0.5);
  CHECK(c.loss.oe_mode == OeMode::kNone);
  CHECK(c.toy.grid.points_per_axis == 101);
  CHECK(kind_name(c.kind) == "toy_example2");

  const ExperimentConfig k = parse_config_text(
      R"({"experiment": "toy_example1", "epochs": 8, "lambda": {"mode": "kl_epoch", "d_kl": 0.088}})");
  CHECK(k.lambda.total_epochs == 8);
  CHECK(k.d_kl_given);
  CHECK(k.lambda.d_kl == 0.088);
}

TEST_CASE("config errors carry the key path") {
  CHECK(error_path(R"({"experiment": "toy_example1", "loss": {"weightz": {}}})") == "loss.weightz");
  CHECK(error_path(R"({"experiment": "toy_example1", "epochs": "ten"})") == "epochs");
  CHECK(error_path(R"({"experiment": "toy_example1", "epochs": -1})") == "epochs");
  CHECK(error_path(R"({"seed": 1})") == "experiment");
  CHECK(error_path(R"({"experiment": "toy_example3"})") == "experiment");
  CHECK(error_path(R"({"experiment": "toy_example1", "lambda": {"mode": "kl_static"}})") ==
        "lambda.d_kl");
  CHECK(error_path(R"({"experiment": "toy_example1",
                       "loss": {"weights": {"mode": "manual", "values": [1, "x"]}}})") ==
        "loss.weights.values[1]");
  CHECK(error_path(R"({"experiment": "toy_example1",
                       "loss": {"weights": {"mode": "manual", "values": [1, 0]}}})") ==
        "loss.weights.values[1]");
  CHECK(error_path(R"({"experiment": "toy_example1", "toy": {"grid": {"lo": 3, "hi": 1}}})") ==
        "toy.grid.lo");
  CHECK(error_path(R"({"experiment": "toy_example1", "data": {}})") == "data");
  CHECK(error_path(R"({"experiment": "image", "data": {"train": {"dir": "a"}}})") == "data.test");
  CHECK(error_path(R"({"experiment": "image", "loss": {"oe_mode": "uniform"},
                       "data": {"train": {"dir": "a"}, "test": {"dir": "b"}}})") ==
        "data.outliers");
  CHECK(error_path(R"({"experiment": "image", "data": {"attribute": "race",
                       "train": {"dir": "a"}, "test": {"dir": "b"}}})") == "data.attribute");
  CHECK(error_path(R"({"experiment": "image", "data": {"side": 8,
                       "train": {"dir": "a"}, "test": {"dir": "b"}}})") == "model");
  CHECK(error_path("{not json") == "");
  CHECK_THROWS_AS(parse_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("image config paths resolve against the config directory") {
  test::TempDir dir("cfg");
  test::spit(dir / "c.json", R"({"experiment": "image",
    "data": {"train": {"dir": "imgs/train", "labels_csv": "labels.csv"}, "test": {"dir": "/abs/test"},
             "outliers": {"source": "external", "dir": "ff", "manifest": "m.tsv"}}})");
  const ExperimentConfig c = parse_config(dir / "c.json");
  CHECK(c.data.train.dir == dir.path() / "imgs/train");
  CHECK(*c.data.train.labels_csv == dir.path() / "labels.csv");
  CHECK(c.data.test.dir == fs::path("/abs/test"));
  CHECK(c.data.outliers->source == OutlierSource::kExternal);
  CHECK(c.data.outliers->manifest == dir.path() / "m.tsv");
}

TEST_CASE("derived seeds are stable and distinct") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t base = 0; base < 20; ++base) {
    for (std::uint64_t stream = 1; stream <= 7; ++stream) {
      CHECK(derive_seed(base, stream) == derive_seed(base, stream));
      seen.insert(derive_seed(base, stream));
    }
  }
  CHECK(seen.size() == 140);
}

TEST_CASE("aggregate is mean and standard error over defined values") {
  std::vector<MetricsReport> reports(3);
  reports[0].accuracy = 0.5;
  reports[1].accuracy = 0.7;
  reports[2].accuracy = 0.9;
  reports[0].precision = 0.2;
  reports[2].precision = 0.4;
  const auto rows = aggregate_metrics(reports);
  std::map<std::string, AggregateRow> by;
  for (const auto& r : rows) by[r.metric] = r;
  CHECK(*by["accuracy"].mean == doctest::Approx(0.7));
  CHECK(*by["accuracy"].std_error == doctest::Approx(0.2 / std::sqrt(3.0)));
  CHECK(by["precision"].count == 2);
  CHECK(*by["precision"].std_error == doctest::Approx(std::sqrt(0.02) / std::sqrt(2.0)));
  CHECK_FALSE(by["auroc"].mean);
  const auto single = aggregate_metrics(std::span(reports).first(1));
  CHECK(*single[2].std_error == 0.0);
}

TEST_CASE("toy run artifacts, history decomposition and determinism") {
  test::TempDir dir("toyrun");
  ExperimentConfig c = small_toy(dir / "a");
  c.trials = 2;
  c.seed = 11;
  const RunArtifacts art = run_experiment(c);
  REQUIRE(art.trials.size() == 2);
  CHECK(art.trials[1].seed == 12);

  const fs::path t0 = dir / "a" / "trial_0";
  for (const char* f : {"history.csv", "predictions.csv", "confusion.csv", "metrics.csv", "roc.csv",
                        "grid.csv", "toy_summary.csv", "model.ckpt", "run_info.csv"}) {
    CHECK_MESSAGE(fs::exists(t0 / f), f);
  }

  const auto hist = read_csv(t0 / "history.csv");
  CHECK(hist[0] == std::vector<std::string>{"epoch", "lambda", "in_loss", "oe_loss", "total_loss"});
  REQUIRE(hist.size() == 4);
  for (std::size_t e = 0; e < 3; ++e) {
    const auto& row = hist[e + 1];
    const double lam = std::stod(row[1]), in = std::stod(row[2]), oe = std::stod(row[3]),
                 total = std::stod(row[4]);
    CHECK(std::stoul(row[0]) == e);
    CHECK(lam == doctest::Approx(lambda_value(c.lambda, e)).epsilon(1e-15));
    CHECK(std::abs(total - (in + lam * oe)) <= 1e-12 * std::max(1.0, total));
    CHECK(oe >= std::log(2.0) - 1e-12);
  }
  CHECK(std::stod(hist[1][1]) == 0.0);

  const auto grid = read_csv(t0 / "grid.csv");
  CHECK(grid[0] == std::vector<std::string>{"x1", "x2", "p_class1"});
  CHECK(grid.size() == 1 + 21 * 21);

  // Aggregate recomputed from trials.csv.
  const auto trials = read_csv(dir / "a" / "trials.csv");
  REQUIRE(trials.size() == 3);
  const double a0 = std::stod(trials[1][4]), a1 = std::stod(trials[2][4]);
  const auto agg = read_csv(dir / "a" / "aggregate.csv");
  for (const auto& row : agg) {
    if (row[0] != "accuracy") continue;
    CHECK(std::stod(row[1]) == doctest::Approx((a0 + a1) / 2).epsilon(1e-15));
    CHECK(std::stod(row[2]) == doctest::Approx(std::abs(a0 - a1) / 2).epsilon(1e-12));
    CHECK(row[3] == "2");
  }

  c.output_dir = dir / "b";
  run_experiment(c);
  CHECK(tree_contents(dir / "a") == tree_contents(dir / "b"));
}

TEST_CASE("toy example 2 builds a shifted test set") {
  ExperimentConfig c = parse_config_text(R"({"experiment": "toy_example2",
    "toy": {"train_count": 300, "test_count": 100, "oe_count": 50, "grid": {"points_per_axis": 5}}})");
  c.loss.oe_mode = OeMode::kUniform;
  const ExperimentData d = prepare_data(c, 3);
  CHECK(d.train.size() == 300);
  CHECK(d.test.size() == 100);
  CHECK(d.outliers->size() == 50);
  CHECK(d.mesh->size() == 25);
  double mean_abs_x1 = 0;
  for (const auto& s : d.test.samples) mean_abs_x1 += std::abs(s.input[0]);
  CHECK(mean_abs_x1 / 100 > 2.0);
  for (const auto& s : d.train.samples) {
    const double r2 = s.input[0] * s.input[0] + s.input[1] * s.input[1];
    CHECK(*s.label == ((r2 >= 2 && r2 <= 5) ? 1u : 0u));
  }
}

TEST_CASE("probability grid needs two-dimensional input") {
  test::TempDir dir("grid");
  const Model m = build_mlp(MlpConfig{}, 0);
  emit_probability_grid(m, gen_mesh_grid(-6, 6, 101), dir / "g.csv");
  const auto rows = read_csv(dir / "g.csv");
  REQUIRE(rows.size() == 10202);
  for (std::size_t i = 1; i < rows.size(); i += 97) {
    const double p = std::stod(rows[i][2]);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  Dataset images;
  images.samples.push_back({"a", Tensor(Shape{3, 2, 2}), 0, Role::kTest});
  CHECK_THROWS_AS(emit_probability_grid(m, images, dir / "x.csv"), ShapeError);
}

TEST_CASE("outlier mining keeps the top fifth") {
  test::TempDir dir("mine");
  write_image_fixture(dir.path(), 50);
  test::spit(dir / "c.json", image_config(R"(, "source": "mined_top_fraction")",
                                          R"({"mode": "fixed"})"));
  ExperimentConfig c = parse_config(dir / "c.json");
  const MiningResult r = mine_outliers(c);
  CHECK(r.manifest.entries.size() == 10);
  CHECK(r.outliers.size() == 10);
  for (std::size_t i = 1; i < 10; ++i) {
    CHECK(r.manifest.entries[i - 1].score >= r.manifest.entries[i].score);
  }
  for (const auto& s : r.outliers.samples) CHECK(s.role == Role::kOutlierExposure);

  write_manifest(dir / "m.tsv", r.manifest);
  test::spit(dir / "ext.json",
             image_config(R"(, "source": "external", "manifest": "m.tsv")", R"({"mode": "fixed"})"));
  const ExperimentData ext = prepare_data(parse_config(dir / "ext.json"), 0);
  REQUIRE(ext.outliers);
  CHECK(ext.outliers->size() == 10);
  CHECK(ext.outliers->samples[0].id == r.manifest.entries[0].id);
}

TEST_CASE("mining can score candidates against their own pooled histogram") {
  test::TempDir dir("mine_own");
  write_image_fixture(dir.path(), 50);
  test::spit(dir / "c.json",
             image_config(R"(, "source": "mined_top_fraction", "reference": "candidates")",
                          R"({"mode": "fixed"})"));
  const ExperimentConfig c = parse_config(dir / "c.json");
  REQUIRE(c.data.outliers->reference == MiningReference::kCandidates);
  const MiningResult r = mine_outliers(c);
  CHECK(r.manifest.reference == (dir / "oe").string());

  const Dataset pool = load_outlier_dir(dir / "oe", LabelSchema::gender(), 12);
  const OutlierScoreTable expected = rank_outliers(pool, dataset_pixel_histogram(pool));
  REQUIRE(r.manifest.entries.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(r.manifest.entries[i].id == expected.entries[i].id);
    CHECK(r.manifest.entries[i].score == expected.entries[i].score);
  }

  CHECK(error_path(R"({"experiment": "image", "data": {"train": {"dir": "a"},
    "test": {"dir": "a"}, "outliers": {"dir": "b", "reference": "elsewhere"}}})") ==
        "data.outliers.reference");
}

TEST_CASE("image runs with measured and per-batch divergence") {
  test::TempDir dir("imgrun");
  write_image_fixture(dir.path(), 20);

  test::spit(dir / "full.json", image_config("", R"({"mode": "kl_static"})"));
  ExperimentConfig full = parse_config(dir / "full.json");
  full.output_dir = dir / "out_full";
  const ExperimentData data = prepare_data(full, 0);
  const double measured = schedule_divergence(full, data);
  const double direct =
      kl_divergence(dataset_pixel_histogram(data.train), dataset_pixel_histogram(*data.outliers));
  CHECK(measured == direct);
  CHECK(measured > 0.0);
  const ClassWeights w = configured_weights(full, data.train);
  CHECK(w.weights == std::vector<double>{1.0, 1.0});
  const RunArtifacts art = run_experiment(full);
  const auto hist = read_csv(art.trials[0].dir / "history.csv");
  CHECK(std::stod(hist[1][1]) == doctest::Approx(std::tanh(measured)).epsilon(1e-14));
  CHECK(fs::exists(dir / "out_full" / "skipped.tsv"));
  const auto confusion = read_csv(art.trials[0].dir / "confusion.csv");
  CHECK(confusion[1][0] == "Male");

  test::spit(dir / "batch.json", image_config("", R"({"mode": "kl_epoch", "kl_scope": "per_batch"})"));
  ExperimentConfig per_batch = parse_config(dir / "batch.json");
  per_batch.output_dir = dir / "out_batch";
  const RunArtifacts pb = run_experiment(per_batch);
  for (const auto& e : pb.trials[0].history.epochs) {
    CHECK(std::abs(e.total_loss - (e.in_loss + e.lambda * e.oe_loss)) <= 1e-12 * e.total_loss);
  }
  CHECK(pb.trials[0].history.epochs[0].lambda == 0.0);
  CHECK(pb.trials[0].history.epochs[1].lambda > 0.0);
}

TEST_CASE("labelled outlier exposure needs labels") {
  test::TempDir dir("labeled");
  write_image_fixture(dir.path(), 10);
  write_png(dir / "oe" / "unlabelled.png", Raster(12, 12, 30));
  std::string cfg = image_config("", R"({"mode": "fixed"})");
  cfg.replace(cfg.find("\"uniform\""), 9, "\"labeled\"");
  test::spit(dir / "c.json", cfg);
  ExperimentConfig c = parse_config(dir / "c.json");
  c.output_dir = dir / "out";
  try {
    run_experiment(c);
    FAIL("expected ValueError");
  } catch (const ValueError& e) {
    CHECK(std::string(e.what()).find("uniform") != std::string::npos);
  }
  CHECK(fs::exists(dir / "out" / "FAILED"));
}
