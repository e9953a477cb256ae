// oodf command-line driver.
//
//   oodf run <config.json> [--seed N] [--out DIR] [--trials N]
//   oodf mine-outliers <config.json> [--out DIR]
//   oodf grid <checkpoint> <lo,hi> <points-per-axis> <out.csv>
//   oodf metrics <predictions.csv> <out-dir>
//
// Exit status: 0 success, 2 configuration or usage error, 3 runtime abort.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "oodf/config.hpp"
#include "oodf/error.hpp"
#include "oodf/experiment.hpp"
#include "oodf/metrics.hpp"
#include "oodf/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> trials;
};

oodf::ExperimentConfig load(const std::string& path, const Overrides& o) {
  oodf::ExperimentConfig c = oodf::parse_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.trials) c.trials = *o.trials;
  oodf::validate(c);
  return c;
}

int cmd_run(const std::string& config, const Overrides& o) {
  const auto c = load(config, o);
  const auto art = oodf::run_experiment(c);
  std::printf("%zu trial(s) written to %s\n", art.trials.size(), art.output_dir.c_str());
  for (const auto& row : art.aggregate) {
    std::printf("  %-9s %s +- %s\n", row.metric.c_str(), oodf::format_metric(row.mean).c_str(),
                oodf::format_metric(row.std_error).c_str());
  }
  return 0;
}

int cmd_mine(const std::string& config, const Overrides& o) {
  const auto c = load(config, o);
  const auto mined = oodf::mine_outliers(c);
  fs::create_directories(c.output_dir);
  const fs::path manifest = c.output_dir / "outlier_manifest.tsv";
  oodf::write_manifest(manifest, mined.manifest);
  oodf::write_skip_report(c.output_dir / "outlier_skipped.tsv", mined.outliers.skipped);
  std::printf("%zu outliers -> %s\n", mined.manifest.entries.size(), manifest.c_str());
  return 0;
}

std::pair<double, double> parse_bounds(const std::string& text) {
  const auto sep = text.find_first_of(",:");
  try {
    if (sep == std::string::npos) throw std::invalid_argument("no separator");
    std::size_t used = 0;
    const double lo = std::stod(text.substr(0, sep), &used);
    if (used != sep) throw std::invalid_argument("trailing");
    const std::string rest = text.substr(sep + 1);
    const double hi = std::stod(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("trailing");
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw oodf::ConfigError("bounds", "expected lo,hi but got '" + text + "'");
  }
}

int cmd_grid(const std::string& checkpoint, const std::string& bounds, std::size_t resolution,
             const std::string& out) {
  const auto [lo, hi] = parse_bounds(bounds);
  if (!(lo < hi)) throw oodf::ConfigError("bounds", "lo must be below hi");
  if (resolution < 2) throw oodf::ConfigError("resolution", "need at least 2 points per axis");
  const oodf::Model model = oodf::load_model(checkpoint);
  const oodf::Dataset mesh = oodf::gen_mesh_grid(lo, hi, resolution);
  oodf::emit_probability_grid(model, mesh, out);
  std::printf("%zu grid points -> %s\n", mesh.size(), out.c_str());
  return 0;
}

int cmd_metrics(const std::string& predictions, const std::string& out_dir) {
  const auto rows = oodf::read_predictions_csv(predictions);
  std::vector<std::size_t> preds, labels;
  std::vector<double> scores;
  for (const auto& r : rows) {
    preds.push_back(r.predicted);
    labels.push_back(r.label);
    scores.push_back(r.p_class1);
  }
  const auto report = oodf::evaluate(preds, scores, labels, 1);
  fs::create_directories(out_dir);
  oodf::write_confusion_csv(fs::path(out_dir) / "confusion.csv", report.confusion);
  oodf::write_metrics_csv(fs::path(out_dir) / "metrics.csv", report);
  oodf::write_roc_csv(fs::path(out_dir) / "roc.csv", report.roc);
  std::printf("precision %s recall %s accuracy %s f1 %s auroc %s\n",
              oodf::format_metric(report.precision).c_str(),
              oodf::format_metric(report.recall).c_str(),
              oodf::format_metric(report.accuracy).c_str(), oodf::format_metric(report.f1).c_str(),
              oodf::format_metric(report.auroc).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier exposure training and evaluation"};
  app.require_subcommand(1);

  Overrides overrides;
  std::string config, checkpoint, bounds, out, predictions;
  std::size_t resolution = 0;

  const auto add_overrides = [&](CLI::App* sub, bool training) {
    sub->add_option("--seed", overrides.seed, "Base seed (trial k uses seed + k)");
    sub->add_option("--out", overrides.out, "Output directory");
    if (training) {
      sub->add_option("--trials", overrides.trials, "Number of trials");
    }
  };

  auto* run = app.add_subcommand("run", "Train and evaluate as configured");
  run->add_option("config", config, "JSON experiment config")->required();
  add_overrides(run, true);

  auto* mine = app.add_subcommand("mine-outliers", "Rank candidate outliers by pixel KL");
  mine->add_option("config", config, "JSON experiment config")->required();
  add_overrides(mine, false);

  auto* grid = app.add_subcommand("grid", "Probability grid from a two-input checkpoint");
  grid->add_option("checkpoint", checkpoint, "Model checkpoint")->required();
  grid->add_option("bounds", bounds, "lo,hi (e.g. -6,6)")->required();
  grid->add_option("resolution", resolution, "Points per axis")->required();
  grid->add_option("out", out, "Output CSV")->required();
  grid->positionals_at_end();

  auto* metrics = app.add_subcommand("metrics", "Metrics from a predictions file");
  metrics->add_option("predictions", predictions, "predictions.csv")->required();
  metrics->add_option("out-dir", out, "Directory for confusion/metrics/roc CSVs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*run) return cmd_run(config, overrides);
    if (*mine) return cmd_mine(config, overrides);
    if (*grid) return cmd_grid(checkpoint, bounds, resolution, out);
    if (*metrics) return cmd_metrics(predictions, out);
  } catch (const oodf::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigExit;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeExit;
  }
  return kConfigExit;
}
