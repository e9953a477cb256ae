#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "oodf/graph.hpp"

namespace oodf {

/// Fully connected tanh network for two-dimensional toy problems.
struct MlpConfig {
  std::size_t input_dim = 2;
  std::size_t hidden_layers = 2;
  std::size_t hidden_width = 100;
  std::size_t num_classes = 2;
};

/// conv1 -> tanh -> avgpool -> conv2 -> tanh -> flatten -> fc1 -> tanh -> fc2 -> log_softmax
struct CnnConfig {
  std::size_t in_channels = 3;
  std::size_t conv1_out = 32;
  std::size_t conv1_kernel = 5;
  std::size_t pool_kernel = 2;
  std::size_t conv2_out = 64;
  std::size_t conv2_kernel = 5;
  std::size_t fc_hidden = 120;
  std::size_t num_classes = 2;
  std::size_t input_side = 32;
};

struct CnnGeometry {
  std::size_t conv1_side;
  std::size_t pool_side;
  std::size_t conv2_side;
  std::size_t flatten_size;
};

/// Spatial sizes through the network; throws ShapeError listing the
/// intermediate sides when any stage is empty or pooling does not divide.
CnnGeometry cnn_geometry(const CnnConfig& config);

enum class Architecture { kMlp, kCnn };

class Model {
 public:
  using Config = std::variant<MlpConfig, CnnConfig>;

  Model(Config config, ParameterSet params);

  Architecture architecture() const noexcept;
  const Config& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

  /// Shape of one sample, without the batch axis.
  Shape sample_shape() const;
  std::size_t num_classes() const noexcept;

  /// Tap-able layer names in forward order.
  std::vector<std::string> layer_names() const;

  /// Appends this network to `graph` (which must be bound to parameters())
  /// and returns the log-probability node. Layer nodes are labelled
  /// `prefix + layer_name`.
  NodeId attach(Graph& graph, NodeId input, std::string_view prefix = "") const;

 private:
  Config config_;
  ParameterSet params_;
};

Model build_mlp(const MlpConfig& config, std::uint64_t seed);
Model build_cnn(const CnnConfig& config, std::uint64_t seed);

/// Per-row log-probabilities, shape [N, K].
Tensor predict(const Model& model, const Tensor& batch);

/// Values of one named layer, one row per input: shape [N, features].
Tensor extract_activations(const Model& model, const Tensor& batch, std::string_view layer);

/// Writes the checkpoint at `path` and a JSON config sidecar at `path` + ".json".
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace oodf
