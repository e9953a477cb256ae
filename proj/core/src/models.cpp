#include "oodf/models.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"
#include "oodf/checkpoint.hpp"
#include "oodf/error.hpp"

namespace oodf {

namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
void add_layer(ParameterSet& params, std::mt19937_64& rng, const std::string& name,
               Shape weight_shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor weight(weight_shape);
  for (double& v : weight.data()) v = dist(rng);
  params.add(name + ".weight", std::move(weight));
  params.add(name + ".bias", Tensor(Shape{weight_shape[0]}));
}

void validate(const MlpConfig& c) {
  if (c.input_dim == 0 || c.hidden_layers == 0 || c.hidden_width == 0) {
    throw ValueError("mlp: input_dim, hidden_layers and hidden_width must be positive");
  }
  if (c.num_classes < 2) throw ValueError("mlp: num_classes must be at least 2");
}

json config_json(const Model::Config& config) {
  return std::visit(
      Overloaded{
          [](const MlpConfig& c) {
            return json{{"architecture", "mlp"},       {"input_dim", c.input_dim},
                        {"hidden_layers", c.hidden_layers}, {"hidden_width", c.hidden_width},
                        {"num_classes", c.num_classes}};
          },
          [](const CnnConfig& c) {
            return json{{"architecture", "cnn"},         {"in_channels", c.in_channels},
                        {"conv1_out", c.conv1_out},       {"conv1_kernel", c.conv1_kernel},
                        {"pool_kernel", c.pool_kernel},   {"conv2_out", c.conv2_out},
                        {"conv2_kernel", c.conv2_kernel}, {"fc_hidden", c.fc_hidden},
                        {"num_classes", c.num_classes},   {"input_side", c.input_side}};
          }},
      config);
}

}  // namespace

CnnGeometry cnn_geometry(const CnnConfig& c) {
  if (c.in_channels == 0 || c.conv1_out == 0 || c.conv2_out == 0 || c.fc_hidden == 0 ||
      c.conv1_kernel == 0 || c.conv2_kernel == 0 || c.pool_kernel == 0) {
    throw ValueError("cnn: channel, kernel and width settings must be positive");
  }
  if (c.num_classes < 2) throw ValueError("cnn: num_classes must be at least 2");
  const auto trace = [&](const std::string& stage) {
    return "cnn: " + stage + " (input " + std::to_string(c.input_side) + ", conv1 kernel " +
           std::to_string(c.conv1_kernel) + ", pool " + std::to_string(c.pool_kernel) +
           ", conv2 kernel " + std::to_string(c.conv2_kernel) + ")";
  };
  if (c.input_side < c.conv1_kernel) throw ShapeError(trace("conv1 output is empty"));
  CnnGeometry g{};
  g.conv1_side = c.input_side - c.conv1_kernel + 1;
  if (g.conv1_side % c.pool_kernel != 0 || g.conv1_side < c.pool_kernel) {
    throw ShapeError(trace("conv1 side " + std::to_string(g.conv1_side) +
                           " is not an integer multiple of the pool window"));
  }
  g.pool_side = g.conv1_side / c.pool_kernel;
  if (g.pool_side < c.conv2_kernel) {
    throw ShapeError(trace("pooled side " + std::to_string(g.pool_side) +
                           " is smaller than the conv2 kernel"));
  }
  g.conv2_side = g.pool_side - c.conv2_kernel + 1;
  g.flatten_size = c.conv2_out * g.conv2_side * g.conv2_side;
  return g;
}

Model::Model(Config config, ParameterSet params)
    : config_(std::move(config)), params_(std::move(params)) {}

Architecture Model::architecture() const noexcept {
  return std::holds_alternative<MlpConfig>(config_) ? Architecture::kMlp : Architecture::kCnn;
}

Shape Model::sample_shape() const {
  return std::visit(Overloaded{[](const MlpConfig& c) { return Shape{c.input_dim}; },
                               [](const CnnConfig& c) {
                                 return Shape{c.in_channels, c.input_side, c.input_side};
                               }},
                    config_);
}

std::size_t Model::num_classes() const noexcept {
  return std::visit([](const auto& c) { return c.num_classes; }, config_);
}

std::vector<std::string> Model::layer_names() const {
  if (const auto* mlp = std::get_if<MlpConfig>(&config_)) {
    std::vector<std::string> names;
    for (std::size_t i = 1; i <= mlp->hidden_layers; ++i) {
      names.push_back("fc" + std::to_string(i));
      names.push_back("tanh" + std::to_string(i));
    }
    names.push_back("fc" + std::to_string(mlp->hidden_layers + 1));
    names.push_back("log_softmax");
    return names;
  }
  return {"conv1", "tanh1", "pool1", "conv2", "tanh2", "flatten", "fc1", "tanh3", "fc2",
          "log_softmax"};
}

NodeId Model::attach(Graph& graph, NodeId input, std::string_view prefix) const {
  if (&graph.parameters() != &params_) {
    throw ValueError("model: graph is bound to a different parameter set");
  }
  const std::string pre(prefix);
  NodeId x = input;
  const auto tap = [&](NodeId node, const std::string& name) {
    graph.label(node, pre + name);
    return node;
  };
  const auto dense = [&](NodeId in, const std::string& name) {
    return tap(graph.linear(in, graph.param(name + ".weight"), graph.param(name + ".bias")), name);
  };

  if (const auto* mlp = std::get_if<MlpConfig>(&config_)) {
    for (std::size_t i = 1; i <= mlp->hidden_layers; ++i) {
      x = dense(x, "fc" + std::to_string(i));
      x = tap(graph.tanh(x), "tanh" + std::to_string(i));
    }
    x = dense(x, "fc" + std::to_string(mlp->hidden_layers + 1));
  } else {
    const auto& cnn = std::get<CnnConfig>(config_);
    x = tap(graph.conv2d(x, graph.param("conv1.weight"), graph.param("conv1.bias")), "conv1");
    x = tap(graph.tanh(x), "tanh1");
    x = tap(graph.avg_pool2d(x, cnn.pool_kernel), "pool1");
    x = tap(graph.conv2d(x, graph.param("conv2.weight"), graph.param("conv2.bias")), "conv2");
    x = tap(graph.tanh(x), "tanh2");
    x = tap(graph.flatten(x), "flatten");
    x = dense(x, "fc1");
    x = tap(graph.tanh(x), "tanh3");
    x = dense(x, "fc2");
  }
  return tap(graph.log_softmax(x), "log_softmax");
}

Model build_mlp(const MlpConfig& config, std::uint64_t seed) {
  validate(config);
  std::mt19937_64 rng(seed);
  ParameterSet params;
  std::size_t fan_in = config.input_dim;
  for (std::size_t i = 1; i <= config.hidden_layers; ++i) {
    add_layer(params, rng, "fc" + std::to_string(i), {config.hidden_width, fan_in}, fan_in);
    fan_in = config.hidden_width;
  }
  add_layer(params, rng, "fc" + std::to_string(config.hidden_layers + 1),
            {config.num_classes, fan_in}, fan_in);
  return Model(config, std::move(params));
}

Model build_cnn(const CnnConfig& config, std::uint64_t seed) {
  const CnnGeometry g = cnn_geometry(config);
  std::mt19937_64 rng(seed);
  ParameterSet params;
  const std::size_t k1 = config.conv1_kernel, k2 = config.conv2_kernel;
  add_layer(params, rng, "conv1", {config.conv1_out, config.in_channels, k1, k1},
            config.in_channels * k1 * k1);
  add_layer(params, rng, "conv2", {config.conv2_out, config.conv1_out, k2, k2},
            config.conv1_out * k2 * k2);
  add_layer(params, rng, "fc1", {config.fc_hidden, g.flatten_size}, g.flatten_size);
  add_layer(params, rng, "fc2", {config.num_classes, config.fc_hidden}, config.fc_hidden);
  return Model(config, std::move(params));
}

namespace {

Graph eval_graph(const Model& model, const Tensor& batch, NodeId& input) {
  Shape expected = model.sample_shape();
  Shape declared{0};
  declared.insert(declared.end(), expected.begin(), expected.end());
  bool ok = batch.rank() == declared.size();
  for (std::size_t a = 1; ok && a < declared.size(); ++a) ok = batch.dim(a) == declared[a];
  if (!ok) {
    throw ShapeError("predict: batch " + shape_string(batch.shape()) + " does not match [N, " +
                     shape_string(expected).substr(1));
  }
  // Forward passes only read parameter values.
  Graph graph(const_cast<ParameterSet&>(model.parameters()));
  input = graph.input("x", std::move(declared));
  return graph;
}

}  // namespace

Tensor predict(const Model& model, const Tensor& batch) {
  NodeId input = 0;
  Graph graph = eval_graph(model, batch, input);
  graph.set_output("log_probs", model.attach(graph, input));
  return graph.forward({{"x", batch}}).at("log_probs");
}

Tensor extract_activations(const Model& model, const Tensor& batch, std::string_view layer) {
  NodeId input = 0;
  Graph graph = eval_graph(model, batch, input);
  model.attach(graph, input);
  const auto node = graph.find(layer);
  if (!node) {
    std::string valid;
    for (const auto& name : model.layer_names()) valid += (valid.empty() ? "" : ", ") + name;
    throw ValueError("unknown layer '" + std::string(layer) + "'; valid layers: " + valid);
  }
  graph.forward({{"x", batch}});
  const Tensor& values = graph.value(*node);
  const std::size_t n = values.dim(0);
  return values.reshaped({n, n ? values.size() / n : 0});
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

void save_model(const Model& model, const std::filesystem::path& path) {
  write_checkpoint(path, model.parameters());
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  if (!out) throw IoError("model: cannot write sidecar for '" + path.string() + "'");
  out << config_json(model.config()).dump(2) << '\n';
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(sidecar_path(path));
  if (!in) throw IoError("model: missing sidecar '" + sidecar_path(path).string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("model: malformed sidecar: " + std::string(e.what()));
  }
  const auto get = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number_unsigned()) {
      throw IoError(std::string("model: sidecar lacks integer '") + key + "'");
    }
    return j[key].get<std::size_t>();
  };
  const std::string arch = j.value("architecture", "");
  Model model = [&] {
    if (arch == "mlp") {
      return build_mlp({get("input_dim"), get("hidden_layers"), get("hidden_width"),
                        get("num_classes")},
                       0);
    }
    if (arch == "cnn") {
      return build_cnn({get("in_channels"), get("conv1_out"), get("conv1_kernel"),
                        get("pool_kernel"), get("conv2_out"), get("conv2_kernel"),
                        get("fc_hidden"), get("num_classes"), get("input_side")},
                       0);
    }
    throw IoError("model: unknown architecture '" + arch + "' in sidecar");
  }();
  load_values(model.parameters(), read_checkpoint(path));
  return model;
}

}  // namespace oodf
