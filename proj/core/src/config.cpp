#include "oodf/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "oodf/error.hpp"

namespace oodf {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

// Reads one JSON object, remembering which keys were consumed so that
// anything left over can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(std::string_view key) const { return node_.contains(std::string(key)); }

  const json* take(std::string_view key) {
    seen_.insert(std::string(key));
    auto it = node_.find(std::string(key));
    return it == node_.end() ? nullptr : &*it;
  }

  const json& require(std::string_view key) {
    const json* v = take(key);
    if (!v) throw ConfigError(join(path_, key), "required key is missing");
    return *v;
  }

  void count(std::string_view key, std::size_t& out) {
    if (const json* v = take(key)) out = as_count(*v, join(path_, key));
  }
  void seed(std::string_view key, std::uint64_t& out) {
    if (const json* v = take(key)) out = as_count(*v, join(path_, key));
  }
  void real(std::string_view key, double& out) {
    if (const json* v = take(key)) out = as_real(*v, join(path_, key));
  }
  void boolean(std::string_view key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(join(path_, key), "expected true or false");
      out = v->get<bool>();
    }
  }
  std::optional<std::string> text(std::string_view key) {
    const json* v = take(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) throw ConfigError(join(path_, key), "expected a string");
    return v->get<std::string>();
  }
  std::string required_text(std::string_view key) {
    const json& v = require(key);
    if (!v.is_string()) throw ConfigError(join(path_, key), "expected a string");
    return v.get<std::string>();
  }
  void reals(std::string_view key, std::vector<double>& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_array()) throw ConfigError(join(path_, key), "expected an array of numbers");
    out.clear();
    for (std::size_t i = 0; i < v->size(); ++i) {
      out.push_back(as_real((*v)[i], join(path_, key) + "[" + std::to_string(i) + "]"));
    }
  }
  std::optional<ObjectReader> child(std::string_view key) {
    const json* v = take(key);
    if (!v) return std::nullopt;
    return ObjectReader(*v, join(path_, key));
  }

  const std::string& path() const noexcept { return path_; }
  std::string at(std::string_view key) const { return join(path_, key); }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown key");
    }
  }

 private:
  static std::uint64_t as_count(const json& v, const std::string& path) {
    if (!v.is_number_unsigned()) throw ConfigError(path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  static double as_real(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    return v.get<double>();
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum, std::size_t N>
Enum pick(const std::string& value, const std::pair<const char*, Enum> (&table)[N],
          const std::string& path) {
  std::string allowed;
  for (const auto& [name, e] : table) {
    if (value == name) return e;
    allowed += allowed.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(path, "unknown value '" + value + "' (expected one of: " + allowed + ")");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

ImageSetConfig parse_image_set(ObjectReader r, const fs::path& base) {
  ImageSetConfig s;
  s.dir = resolve(base, r.required_text("dir"));
  if (auto csv = r.text("labels_csv")) s.labels_csv = resolve(base, *csv);
  r.finish();
  return s;
}

void parse_model(ObjectReader r, ExperimentConfig& c) {
  if (c.kind == ExperimentKind::kImage) {
    r.count("conv1_out", c.cnn.conv1_out);
    r.count("conv1_kernel", c.cnn.conv1_kernel);
    r.count("pool_kernel", c.cnn.pool_kernel);
    r.count("conv2_out", c.cnn.conv2_out);
    r.count("conv2_kernel", c.cnn.conv2_kernel);
    r.count("fc_hidden", c.cnn.fc_hidden);
  } else {
    r.count("hidden_layers", c.mlp.hidden_layers);
    r.count("hidden_width", c.mlp.hidden_width);
  }
  r.finish();
}

void parse_loss(ObjectReader r, ExperimentConfig& c) {
  if (auto w = r.child("weights")) {
    static constexpr std::pair<const char*, WeightConfig::Mode> kModes[] = {
        {"none", WeightConfig::Mode::kNone},
        {"formula", WeightConfig::Mode::kFormula},
        {"rescaled", WeightConfig::Mode::kRescaled},
        {"manual", WeightConfig::Mode::kManual}};
    if (auto mode = w->text("mode")) c.loss.weights.mode = pick(*mode, kModes, w->at("mode"));
    w->reals("values", c.loss.weights.values);
    if (c.loss.weights.mode == WeightConfig::Mode::kManual && c.loss.weights.values.empty()) {
      throw ConfigError(w->at("values"), "manual weights need values");
    }
    if (c.loss.weights.mode != WeightConfig::Mode::kManual && !c.loss.weights.values.empty()) {
      throw ConfigError(w->at("values"), "values are only used in manual mode");
    }
    w->finish();
  }
  static constexpr std::pair<const char*, OeMode> kOe[] = {
      {"none", OeMode::kNone}, {"uniform", OeMode::kUniform}, {"labeled", OeMode::kLabeled}};
  if (auto oe = r.text("oe_mode")) c.loss.oe_mode = pick(*oe, kOe, r.at("oe_mode"));
  r.boolean("weight_oe_term", c.loss.weight_oe_term);
  r.finish();
}

void parse_lambda(ObjectReader r, ExperimentConfig& c) {
  static constexpr std::pair<const char*, LambdaMode> kModes[] = {
      {"fixed", LambdaMode::kFixed}, {"kl_static", LambdaMode::kKlStatic},
      {"kl_epoch", LambdaMode::kKlEpoch}};
  static constexpr std::pair<const char*, KlScope> kScopes[] = {
      {"full_distribution", KlScope::kFullDistribution}, {"per_batch", KlScope::kPerBatch}};
  if (auto mode = r.text("mode")) c.lambda.mode = pick(*mode, kModes, r.at("mode"));
  r.real("fixed_value", c.lambda.fixed_value);
  if (r.has("d_kl")) {
    r.real("d_kl", c.lambda.d_kl);
    c.d_kl_given = true;
  }
  if (auto scope = r.text("kl_scope")) c.lambda.kl_scope = pick(*scope, kScopes, r.at("kl_scope"));
  r.finish();
}

void parse_toy(ObjectReader r, ToyConfig& t) {
  r.count("train_count", t.train_count);
  r.real("train_half_width", t.train_half_width);
  r.count("test_count", t.test_count);
  r.count("oe_count", t.oe_count);
  r.real("oe_inner", t.oe_inner);
  r.real("oe_outer", t.oe_outer);
  r.real("ood_offset", t.ood_offset);
  r.real("annulus_r_min_sq", t.annulus_r_min_sq);
  r.real("annulus_r_max_sq", t.annulus_r_max_sq);
  r.real("far_threshold", t.far_threshold);
  if (auto g = r.child("grid")) {
    g->real("lo", t.grid.lo);
    g->real("hi", t.grid.hi);
    g->count("points_per_axis", t.grid.points_per_axis);
    g->finish();
  }
  r.finish();
}

void parse_data(ObjectReader r, ImageDataConfig& d, const fs::path& base) {
  if (auto attr = r.text("attribute")) {
    try {
      d.attribute = LabelSchema::from_name(*attr).attribute;
    } catch (const Error& e) {
      throw ConfigError(r.at("attribute"), e.what());
    }
  }
  r.count("side", d.side);
  d.train = parse_image_set(ObjectReader(r.require("train"), r.at("train")), base);
  d.test = parse_image_set(ObjectReader(r.require("test"), r.at("test")), base);
  if (auto o = r.child("outliers")) {
    OutlierConfig oc;
    static constexpr std::pair<const char*, OutlierSource> kSources[] = {
        {"full_dataset", OutlierSource::kFullDataset},
        {"mined_top_fraction", OutlierSource::kMinedTopFraction},
        {"external", OutlierSource::kExternal}};
    if (auto src = o->text("source")) oc.source = pick(*src, kSources, o->at("source"));
    oc.images.dir = resolve(base, o->required_text("dir"));
    if (auto csv = o->text("labels_csv")) oc.images.labels_csv = resolve(base, *csv);
    o->real("fraction", oc.fraction);
    static constexpr std::pair<const char*, MiningReference> kReferences[] = {
        {"train", MiningReference::kTrain}, {"candidates", MiningReference::kCandidates}};
    if (auto ref = o->text("reference")) oc.reference = pick(*ref, kReferences, o->at("reference"));
    if (auto m = o->text("manifest")) oc.manifest = resolve(base, *m);
    o->finish();
    d.outliers = std::move(oc);
  }
  r.finish();
}

}  // namespace

std::string_view kind_name(ExperimentKind kind) noexcept {
  switch (kind) {
    case ExperimentKind::kToyExample1: return "toy_example1";
    case ExperimentKind::kToyExample2: return "toy_example2";
    case ExperimentKind::kImage: return "image";
  }
  return "unknown";
}

void validate(const ExperimentConfig& c) {
  if (c.epochs < 1) throw ConfigError("epochs", "must be at least 1");
  if (c.trials < 1) throw ConfigError("trials", "must be at least 1");
  if (c.batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
  if (!(c.learning_rate > 0)) throw ConfigError("learning_rate", "must be positive");
  if (c.lambda.fixed_value < 0) throw ConfigError("lambda.fixed_value", "must be non-negative");
  if (c.lambda.d_kl < 0) throw ConfigError("lambda.d_kl", "must be non-negative");

  const bool toy = c.kind != ExperimentKind::kImage;
  const bool kl_mode = c.lambda.mode != LambdaMode::kFixed;
  if (toy && kl_mode && !c.d_kl_given) {
    throw ConfigError("lambda.d_kl", "required for KL schedules in toy experiments");
  }
  if (toy && c.lambda.kl_scope == KlScope::kPerBatch) {
    throw ConfigError("lambda.kl_scope", "per_batch needs image data");
  }
  if (kl_mode && c.lambda.kl_scope == KlScope::kPerBatch && c.d_kl_given) {
    throw ConfigError("lambda.d_kl", "per_batch scope measures the divergence itself");
  }
  if (c.lambda.kl_scope == KlScope::kPerBatch && c.loss.oe_mode == OeMode::kNone) {
    throw ConfigError("lambda.kl_scope", "per_batch scope needs an outlier set");
  }
  if (c.loss.weights.mode == WeightConfig::Mode::kManual) {
    for (std::size_t i = 0; i < c.loss.weights.values.size(); ++i) {
      if (!(c.loss.weights.values[i] > 0)) {
        throw ConfigError("loss.weights.values[" + std::to_string(i) + "]", "must be positive");
      }
    }
    if (c.loss.weights.values.size() != 2) {
      throw ConfigError("loss.weights.values", "expected one weight per class (2)");
    }
  }

  if (toy) {
    const ToyConfig& t = c.toy;
    if (t.train_count == 0) throw ConfigError("toy.train_count", "must be positive");
    if (!(t.train_half_width > 0)) throw ConfigError("toy.train_half_width", "must be positive");
    if (t.test_count == 0) throw ConfigError("toy.test_count", "must be positive");
    if (t.oe_count == 0) throw ConfigError("toy.oe_count", "must be positive");
    if (!(t.oe_inner >= 0 && t.oe_inner < t.oe_outer)) {
      throw ConfigError("toy.oe_inner", "need 0 <= oe_inner < oe_outer");
    }
    if (!(t.annulus_r_min_sq >= 0 && t.annulus_r_min_sq <= t.annulus_r_max_sq)) {
      throw ConfigError("toy.annulus_r_min_sq", "need 0 <= r_min_sq <= r_max_sq");
    }
    if (!(t.grid.lo < t.grid.hi)) throw ConfigError("toy.grid.lo", "must be below toy.grid.hi");
    if (t.grid.points_per_axis < 2) {
      throw ConfigError("toy.grid.points_per_axis", "must be at least 2");
    }
    if (c.mlp.hidden_width == 0) throw ConfigError("model.hidden_width", "must be positive");
  } else {
    if (c.data.attribute != Attribute::kGender) {
      throw ConfigError("data.attribute", "only the binary gender attribute can be evaluated");
    }
    if (c.data.side == 0) throw ConfigError("data.side", "must be positive");
    if (c.loss.oe_mode != OeMode::kNone && !c.data.outliers) {
      throw ConfigError("data.outliers", "required when loss.oe_mode is not none");
    }
    if (c.data.outliers) {
      const OutlierConfig& o = *c.data.outliers;
      if (!(o.fraction > 0 && o.fraction <= 1)) {
        throw ConfigError("data.outliers.fraction", "must lie in (0, 1]");
      }
      if (o.source == OutlierSource::kExternal && o.manifest.empty()) {
        throw ConfigError("data.outliers.manifest", "required for the external source");
      }
    }
    CnnConfig cnn = c.cnn;
    cnn.input_side = c.data.side;
    try {
      cnn_geometry(cnn);
    } catch (const ShapeError& e) {
      throw ConfigError("model", e.what());
    }
  }
}

ExperimentConfig parse_config_text(std::string_view text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  ObjectReader r(root, "");
  ExperimentConfig c;
  static constexpr std::pair<const char*, ExperimentKind> kKinds[] = {
      {"toy_example1", ExperimentKind::kToyExample1},
      {"toy_example2", ExperimentKind::kToyExample2},
      {"image", ExperimentKind::kImage}};
  c.kind = pick(r.required_text("experiment"), kKinds, "experiment");

  r.seed("seed", c.seed);
  r.count("trials", c.trials);
  r.count("epochs", c.epochs);
  r.count("batch_size", c.batch_size);
  r.real("learning_rate", c.learning_rate);
  if (auto out = r.text("output_dir")) c.output_dir = *out;
  r.boolean("emit_grid", c.emit_grid);
  r.boolean("save_checkpoint", c.save_checkpoint);
  if (auto m = r.child("model")) parse_model(std::move(*m), c);
  if (auto l = r.child("loss")) parse_loss(std::move(*l), c);
  if (auto l = r.child("lambda")) parse_lambda(std::move(*l), c);

  const bool toy = c.kind != ExperimentKind::kImage;
  if (toy) {
    if (r.has("data")) throw ConfigError("data", "not used by toy experiments");
    if (auto t = r.child("toy")) parse_toy(std::move(*t), c.toy);
  } else {
    if (r.has("toy")) throw ConfigError("toy", "not used by image experiments");
    parse_data(ObjectReader(r.require("data"), "data"), c.data, base_dir);
  }
  r.finish();
  c.lambda.total_epochs = c.epochs;
  validate(c);
  return c;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path.parent_path());
}

}  // namespace oodf
