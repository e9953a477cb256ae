#include "oodf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "oodf/adam.hpp"
#include "oodf/error.hpp"
#include "oodf/synthetic.hpp"

namespace oodf {

namespace fs = std::filesystem;

namespace {

// Seed streams within one trial.
enum Stream : std::uint64_t {
  kTrainData = 1,
  kOutlierData = 2,
  kTestData = 3,
  kToyOutlierMixture = 4,
  kInit = 5,
  kShuffle = 6,
  kOutlierShuffle = 7,
};

constexpr std::size_t kEvalChunk = 256;
constexpr std::size_t kBinary = 2;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string num_or_na(std::optional<double> v) { return v ? num(*v) : "NA"; }

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

Tensor label_tensor(const std::vector<std::size_t>& labels) {
  std::vector<double> v(labels.begin(), labels.end());
  return Tensor(Shape{labels.size()}, std::move(v));
}

Dataset load_set(const ImageSetConfig& set, const LabelSchema& schema, Role role,
                 std::size_t side) {
  if (set.labels_csv) return load_csv_labels(set.dir, *set.labels_csv, schema, role, side);
  return load_image_dir(set.dir, schema, role, side);
}

Dataset load_candidates(const OutlierConfig& o, const LabelSchema& schema, std::size_t side) {
  if (o.images.labels_csv) {
    return load_csv_labels(o.images.dir, *o.images.labels_csv, schema, Role::kOutlierExposure,
                           side);
  }
  return load_outlier_dir(o.images.dir, schema, side);
}

MiningResult mine_from(const Dataset& train, Dataset candidates, const OutlierConfig& o,
                       const std::string& train_name) {
  const bool own = o.reference == MiningReference::kCandidates;
  const std::string reference = own ? o.images.dir.string() : train_name;
  const OutlierScoreTable table = rank_outliers(
      candidates, own ? dataset_pixel_histogram(candidates) : dataset_pixel_histogram(train),
      reference);
  const std::vector<std::string> ids = select_top_fraction(table, o.fraction);
  MiningResult r;
  r.manifest.reference = reference;
  r.manifest.source = o.images.dir.string();
  r.manifest.fraction = o.fraction;
  r.manifest.entries.assign(table.entries.begin(),
                            table.entries.begin() + static_cast<std::ptrdiff_t>(ids.size()));
  r.outliers = candidates.subset(ids);
  r.outliers.set_role(Role::kOutlierExposure);
  r.outliers.skipped = std::move(candidates.skipped);
  return r;
}

std::vector<std::size_t> labels_or_explain(const Dataset& oe, std::span<const std::size_t> idx) {
  try {
    return oe.labels(idx);
  } catch (const ValueError& e) {
    throw ValueError(std::string(e.what()) +
                     "; labelled outlier exposure needs labels, use oe_mode uniform instead");
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  return rng();
}

void write_history_csv(const fs::path& path, const History& history) {
  auto out = open_out(path);
  out << "epoch,lambda,in_loss,oe_loss,total_loss\n";
  for (const EpochRecord& r : history.epochs) {
    out << r.epoch << ',' << num(r.lambda) << ',' << num(r.in_loss) << ',' << num(r.oe_loss)
        << ',' << num(r.total_loss) << '\n';
  }
}

ExperimentData prepare_data(const ExperimentConfig& c, std::uint64_t trial_seed) {
  ExperimentData d;
  const bool oe = c.loss.oe_mode != OeMode::kNone;
  const ToyConfig& t = c.toy;
  switch (c.kind) {
    case ExperimentKind::kToyExample1: {
      d.train = gen_disk_square(t.train_count, derive_seed(trial_seed, kTrainData),
                                t.train_half_width, Role::kTrain);
      d.mesh = gen_mesh_grid(t.grid.lo, t.grid.hi, t.grid.points_per_axis, LabelRule::disk());
      d.test = *d.mesh;
      if (oe) {
        d.outliers = gen_square_band(t.oe_count, t.oe_inner, t.oe_outer, LabelRule::disk(),
                                     derive_seed(trial_seed, kOutlierData));
      }
      break;
    }
    case ExperimentKind::kToyExample2: {
      const LabelRule rule = LabelRule::annulus(t.annulus_r_min_sq, t.annulus_r_max_sq);
      d.train = gen_gaussian({}, t.train_count, rule, derive_seed(trial_seed, kTrainData));
      GaussianMixtureSpec shifted;
      shifted.components = {{{-t.ood_offset, 0.0}, {1, 0, 0, 1}},
                            {{t.ood_offset, 0.0}, {1, 0, 0, 1}}};
      shifted.weights = {0.5, 0.5};
      shifted.count = t.test_count;
      shifted.rule = rule;
      d.test = gen_gaussian_mixture(shifted, derive_seed(trial_seed, kTestData), Role::kTest);
      if (oe) {
        shifted.count = t.oe_count;
        d.outliers = gen_gaussian_mixture(shifted, derive_seed(trial_seed, kToyOutlierMixture),
                                          Role::kOutlierExposure);
      }
      d.mesh = gen_mesh_grid(t.grid.lo, t.grid.hi, t.grid.points_per_axis, rule);
      break;
    }
    case ExperimentKind::kImage: {
      const LabelSchema schema = LabelSchema::gender();
      const std::size_t side = c.data.side;
      d.train = load_set(c.data.train, schema, Role::kTrain, side);
      d.test = load_set(c.data.test, schema, Role::kTest, side);
      if (c.data.outliers) {
        const OutlierConfig& o = *c.data.outliers;
        Dataset candidates = load_candidates(o, schema, side);
        switch (o.source) {
          case OutlierSource::kFullDataset:
            d.outliers = std::move(candidates);
            break;
          case OutlierSource::kMinedTopFraction:
            d.outliers = mine_from(d.train, std::move(candidates), o,
                                   c.data.train.dir.string()).outliers;
            break;
          case OutlierSource::kExternal: {
            const OutlierManifest m = read_manifest(o.manifest);
            std::vector<std::string> ids;
            for (const OutlierScore& e : m.entries) ids.push_back(e.id);
            Dataset chosen = candidates.subset(ids);
            chosen.skipped = std::move(candidates.skipped);
            d.outliers = std::move(chosen);
            break;
          }
        }
      }
      break;
    }
  }
  return d;
}

Model initial_model(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.kind == ExperimentKind::kImage) {
    CnnConfig cnn = c.cnn;
    cnn.in_channels = 3;
    cnn.input_side = c.data.side;
    cnn.num_classes = kBinary;
    return build_cnn(cnn, seed);
  }
  MlpConfig mlp = c.mlp;
  mlp.input_dim = 2;
  mlp.num_classes = kBinary;
  return build_mlp(mlp, seed);
}

ClassWeights configured_weights(const ExperimentConfig& c, const Dataset& train) {
  const std::vector<std::size_t> counts = train.class_counts(kBinary);
  switch (c.loss.weights.mode) {
    case WeightConfig::Mode::kNone: return uniform_weights(kBinary);
    case WeightConfig::Mode::kFormula: return class_weights(counts, WeightMode::kFormula);
    case WeightConfig::Mode::kRescaled: return class_weights(counts, WeightMode::kRescaled);
    case WeightConfig::Mode::kManual:
      return class_weights(counts, WeightMode::kManual, c.loss.weights.values);
  }
  return uniform_weights(kBinary);
}

double schedule_divergence(const ExperimentConfig& c, const ExperimentData& data) {
  if (c.d_kl_given) return c.lambda.d_kl;
  if (c.lambda.mode == LambdaMode::kFixed || c.lambda.kl_scope == KlScope::kPerBatch) return 0.0;
  if (c.kind != ExperimentKind::kImage || !data.outliers) return 0.0;
  return kl_divergence(dataset_pixel_histogram(data.train),
                       dataset_pixel_histogram(*data.outliers));
}

TrainResult train(const ExperimentConfig& c, const ExperimentData& data,
                  std::uint64_t trial_seed) {
  const bool use_oe = c.loss.oe_mode != OeMode::kNone;
  if (data.train.empty()) throw ValueError("train: empty training set");
  if (use_oe && (!data.outliers || data.outliers->empty())) {
    throw ValueError("train: outlier exposure needs a non-empty outlier set");
  }
  const bool per_batch = c.lambda.mode != LambdaMode::kFixed &&
                         c.lambda.kl_scope == KlScope::kPerBatch;

  TrainResult r{initial_model(c, derive_seed(trial_seed, kInit)), {},
                configured_weights(c, data.train), schedule_divergence(c, data)};
  LambdaSchedule schedule = c.lambda;
  schedule.total_epochs = c.epochs;
  schedule.d_kl = r.d_kl;
  validate(schedule);

  Model& model = r.model;
  ParameterSet& params = model.parameters();
  Graph g(params);
  Shape batch_shape{0};
  for (std::size_t d : model.sample_shape()) batch_shape.push_back(d);

  const NodeId x = g.input("x", batch_shape);
  const NodeId y = g.input("y", Shape{0});
  const NodeId in_loss = g.weighted_nll(model.attach(g, x, "in/"), y, r.weights.weights);
  g.set_output("in", in_loss);
  NodeId loss = in_loss;
  if (use_oe) {
    const NodeId x_oe = g.input("x_oe", batch_shape);
    const NodeId lp_oe = model.attach(g, x_oe, "oe/");
    NodeId oe_loss;
    if (c.loss.oe_mode == OeMode::kUniform) {
      oe_loss = g.uniform_cross_entropy(lp_oe);
    } else {
      std::vector<double> w = c.loss.weight_oe_term ? r.weights.weights
                                                    : std::vector<double>(kBinary, 1.0);
      oe_loss = g.weighted_nll(lp_oe, g.input("y_oe", Shape{0}), std::move(w));
    }
    loss = g.scale_add(in_loss, oe_loss, g.input("lambda", Shape{1}));
    g.set_output("oe", oe_loss);
    g.set_output("total", loss);
  }

  AdamOptions opts;
  opts.learning_rate = c.learning_rate;
  AdamState adam(params, opts);

  const std::uint64_t shuffle_seed = derive_seed(trial_seed, kShuffle);
  const std::uint64_t oe_seed = derive_seed(trial_seed, kOutlierShuffle);
  std::vector<std::vector<std::size_t>> oe_batches;
  std::size_t oe_cursor = 0, oe_pass = 0;
  const auto next_oe = [&]() -> const std::vector<std::size_t>& {
    if (oe_cursor == oe_batches.size()) {
      oe_batches = batches(*data.outliers, c.batch_size, oe_seed, oe_pass++);
      oe_cursor = 0;
    }
    return oe_batches[oe_cursor++];
  };

  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    const double epoch_lambda = lambda_value(schedule, epoch);
    double in_sum = 0, oe_sum = 0, total_sum = 0, lambda_oe_sum = 0, lambda_sum = 0;
    const auto plan = batches(data.train, c.batch_size, shuffle_seed, epoch);
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const auto& idx = plan[b];
      NamedTensors inputs;
      inputs.emplace("x", data.train.inputs(idx));
      inputs.emplace("y", label_tensor(data.train.labels(idx)));
      double lambda = epoch_lambda;
      if (use_oe) {
        const auto& oe_idx = next_oe();
        inputs.emplace("x_oe", data.outliers->inputs(oe_idx));
        if (c.loss.oe_mode == OeMode::kLabeled) {
          inputs.emplace("y_oe", label_tensor(labels_or_explain(*data.outliers, oe_idx)));
        }
        if (per_batch) {
          const double d = kl_divergence(dataset_pixel_histogram(data.train, idx),
                                         dataset_pixel_histogram(*data.outliers, oe_idx));
          lambda = lambda_value(schedule, epoch, d);
        }
        inputs.emplace("lambda", Tensor::scalar(lambda));
      }

      params.zero_grad();
      NamedTensors out;
      try {
        out = g.forward(inputs);
        g.backward(loss);
        adam_step(params, adam);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                           ": " + e.what());
      }
      const double in_b = out.at("in")[0];
      const double oe_b = use_oe ? out.at("oe")[0] : 0.0;
      in_sum += in_b;
      oe_sum += oe_b;
      total_sum += use_oe ? out.at("total")[0] : in_b;
      lambda_oe_sum += lambda * oe_b;
      lambda_sum += lambda;
    }
    const double n = static_cast<double>(plan.size());
    EpochRecord rec{epoch, epoch_lambda, in_sum / n, oe_sum / n, total_sum / n};
    if (per_batch) rec.lambda = oe_sum > 0 ? lambda_oe_sum / oe_sum : lambda_sum / n;
    r.history.epochs.push_back(rec);
  }
  return r;
}

std::vector<PredictionRow> predict_rows(const Model& model, const Dataset& dataset) {
  std::vector<PredictionRow> rows;
  rows.reserve(dataset.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < dataset.size(); begin += kEvalChunk) {
    idx.resize(std::min(kEvalChunk, dataset.size() - begin));
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor lp = predict(model, dataset.inputs(idx));
    const std::size_t k = lp.dim(1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const Sample& s = dataset.samples[idx[r]];
      if (!s.label) throw ValueError("predict_rows: sample '" + s.id + "' has no label");
      std::size_t best = 0;
      for (std::size_t j = 1; j < k; ++j) {
        if (lp.at(r, j) > lp.at(r, best)) best = j;
      }
      rows.push_back({s.id, *s.label, best, std::exp(lp.at(r, 1))});
    }
  }
  return rows;
}

double accuracy(const Model& model, const Dataset& dataset) {
  const auto rows = predict_rows(model, dataset);
  std::size_t hits = 0;
  for (const PredictionRow& r : rows) hits += r.label == r.predicted;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

void emit_probability_grid(const Model& model, const Dataset& mesh, const fs::path& path) {
  if (model.sample_shape() != Shape{2}) {
    throw ShapeError("probability grid: model input must be two-dimensional, got " +
                     shape_string(model.sample_shape()));
  }
  auto out = open_out(path);
  out << "x1,x2,p_class1\n";
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < mesh.size(); begin += kEvalChunk) {
    idx.resize(std::min(kEvalChunk, mesh.size() - begin));
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor lp = predict(model, mesh.inputs(idx));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const Tensor& p = mesh.samples[idx[r]].input;
      out << num(p[0]) << ',' << num(p[1]) << ',' << num(std::exp(lp.at(r, 1))) << '\n';
    }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

ToySummary toy_summary(const Model& model, const Dataset& mesh, const Dataset& train,
                       double far_threshold, double train_half_width) {
  ToySummary s;
  s.train_accuracy = accuracy(model, train);
  const auto rows = predict_rows(model, mesh);
  double conf_sum = 0;
  std::size_t wrong = 0, outside = 0, outside_confident = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& p = mesh.samples[i].input;
    const double reach = std::max(std::abs(p[0]), std::abs(p[1]));
    const double p1 = rows[i].p_class1;
    if (rows[i].label != 0) continue;
    if (reach > train_half_width) {
      ++outside;
      if (p1 > 0.9) ++outside_confident;
    }
    if (reach > far_threshold) {
      ++s.far_points;
      conf_sum += std::max(p1, 1.0 - p1);
      if (p1 > 0.9) ++wrong;
    }
  }
  if (s.far_points) {
    s.far_mean_confidence = conf_sum / static_cast<double>(s.far_points);
    s.far_confidently_wrong = static_cast<double>(wrong) / static_cast<double>(s.far_points);
  }
  if (outside) {
    s.outside_confident_class1 =
        static_cast<double>(outside_confident) / static_cast<double>(outside);
  }
  return s;
}

std::vector<AggregateRow> aggregate_metrics(std::span<const MetricsReport> reports) {
  using Getter = std::optional<double> (*)(const MetricsReport&);
  static const std::pair<const char*, Getter> kMetrics[] = {
      {"precision", [](const MetricsReport& m) { return m.precision; }},
      {"recall", [](const MetricsReport& m) { return m.recall; }},
      {"accuracy", [](const MetricsReport& m) { return std::optional<double>(m.accuracy); }},
      {"f1", [](const MetricsReport& m) { return m.f1; }},
      {"auroc", [](const MetricsReport& m) { return m.auroc; }},
  };
  std::vector<AggregateRow> out;
  for (const auto& [name, get] : kMetrics) {
    std::vector<double> values;
    for (const MetricsReport& m : reports) {
      if (auto v = get(m)) values.push_back(*v);
    }
    AggregateRow row{name, std::nullopt, std::nullopt, values.size()};
    if (!values.empty()) {
      const double n = static_cast<double>(values.size());
      double sum = 0;
      for (double v : values) sum += v;
      const double mean = sum / n;
      double ss = 0;
      for (double v : values) ss += (v - mean) * (v - mean);
      row.mean = mean;
      row.std_error = values.size() > 1 ? std::sqrt(ss / (n - 1)) / std::sqrt(n) : 0.0;
    }
    out.push_back(std::move(row));
  }
  return out;
}

RunArtifacts run_experiment(const ExperimentConfig& c) {
  validate(c);
  RunArtifacts art;
  art.output_dir = c.output_dir;
  fs::create_directories(c.output_dir);
  const fs::path failed = c.output_dir / "FAILED";
  fs::remove(failed);

  const bool toy = c.kind != ExperimentKind::kImage;
  std::optional<ExperimentData> shared;
  if (!toy) {
    shared = prepare_data(c, c.seed);
    std::vector<SkipEntry> skipped = shared->train.skipped;
    skipped.insert(skipped.end(), shared->test.skipped.begin(), shared->test.skipped.end());
    if (shared->outliers) {
      skipped.insert(skipped.end(), shared->outliers->skipped.begin(),
                     shared->outliers->skipped.end());
    }
    write_skip_report(c.output_dir / "skipped.tsv", skipped);
  }
  std::vector<std::string> class_names;
  if (!toy) class_names = LabelSchema::gender().class_names;

  for (std::size_t k = 0; k < c.trials; ++k) {
    TrialResult t;
    t.trial = k;
    t.seed = c.seed + k;
    t.dir = c.output_dir / ("trial_" + std::to_string(k));
    try {
      fs::create_directories(t.dir);
      std::optional<ExperimentData> local;
      if (toy) local = prepare_data(c, t.seed);
      const ExperimentData& data = toy ? *local : *shared;

      TrainResult trained = train(c, data, t.seed);
      t.history = std::move(trained.history);
      const auto rows = predict_rows(trained.model, data.test);
      std::vector<std::size_t> preds, labels;
      std::vector<double> scores;
      for (const PredictionRow& r : rows) {
        preds.push_back(r.predicted);
        labels.push_back(r.label);
        scores.push_back(r.p_class1);
      }
      t.metrics = evaluate(preds, scores, labels, 1);

      write_history_csv(t.dir / "history.csv", t.history);
      write_predictions_csv(t.dir / "predictions.csv", rows);
      write_confusion_csv(t.dir / "confusion.csv", t.metrics.confusion, class_names);
      write_metrics_csv(t.dir / "metrics.csv", t.metrics);
      write_roc_csv(t.dir / "roc.csv", t.metrics.roc);
      {
        auto info = open_out(t.dir / "run_info.csv");
        info << "key,value\n"
             << "experiment," << kind_name(c.kind) << '\n'
             << "seed," << t.seed << '\n'
             << "d_kl," << num(trained.d_kl) << '\n'
             << "weight_class0," << num(trained.weights.weights[0]) << '\n'
             << "weight_class1," << num(trained.weights.weights[1]) << '\n'
             << "train_size," << data.train.size() << '\n'
             << "test_size," << data.test.size() << '\n'
             << "outlier_size," << (data.outliers ? data.outliers->size() : 0) << '\n';
      }
      if (toy) {
        if (c.emit_grid) emit_probability_grid(trained.model, *data.mesh, t.dir / "grid.csv");
        t.toy = toy_summary(trained.model, *data.mesh, data.train, c.toy.far_threshold,
                            c.kind == ExperimentKind::kToyExample1 ? c.toy.train_half_width
                                                                   : c.toy.far_threshold);
        auto out = open_out(t.dir / "toy_summary.csv");
        out << "key,value\n"
            << "train_accuracy," << num(t.toy->train_accuracy) << '\n'
            << "far_points," << t.toy->far_points << '\n'
            << "far_mean_confidence," << num(t.toy->far_mean_confidence) << '\n'
            << "far_confidently_wrong," << num(t.toy->far_confidently_wrong) << '\n'
            << "outside_confident_class1," << num(t.toy->outside_confident_class1) << '\n';
      }
      if (c.save_checkpoint) save_model(trained.model, t.dir / "model.ckpt");
    } catch (const std::exception& e) {
      std::ofstream flag(failed, std::ios::trunc);
      flag << "trial " << k << " (seed " << t.seed << "): " << e.what() << '\n';
      throw;
    }
    art.trials.push_back(std::move(t));
  }

  std::vector<MetricsReport> reports;
  for (const TrialResult& t : art.trials) reports.push_back(t.metrics);
  art.aggregate = aggregate_metrics(reports);

  auto trials = open_out(c.output_dir / "trials.csv");
  trials << "trial,seed,precision,recall,accuracy,f1,auroc\n";
  for (const TrialResult& t : art.trials) {
    trials << t.trial << ',' << t.seed << ',' << num_or_na(t.metrics.precision) << ','
           << num_or_na(t.metrics.recall) << ',' << num(t.metrics.accuracy) << ','
           << num_or_na(t.metrics.f1) << ',' << num_or_na(t.metrics.auroc) << '\n';
  }
  auto agg = open_out(c.output_dir / "aggregate.csv");
  agg << "metric,mean,std_error,trials\n";
  for (const AggregateRow& row : art.aggregate) {
    agg << row.metric << ',' << num_or_na(row.mean) << ',' << num_or_na(row.std_error) << ','
        << row.count << '\n';
  }
  return art;
}

MiningResult mine_outliers(const ExperimentConfig& c) {
  if (c.kind != ExperimentKind::kImage || !c.data.outliers) {
    throw ConfigError("data.outliers", "outlier mining needs an image experiment with outliers");
  }
  const LabelSchema schema = LabelSchema::gender();
  const Dataset train = load_set(c.data.train, schema, Role::kTrain, c.data.side);
  return mine_from(train, load_candidates(*c.data.outliers, schema, c.data.side),
                   *c.data.outliers, c.data.train.dir.string());
}

}  // namespace oodf
