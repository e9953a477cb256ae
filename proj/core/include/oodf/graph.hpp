#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "oodf/tensor.hpp"

namespace oodf {

/// A trainable (or frozen) named tensor and its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool requires_grad = true;
};

/// Ordered collection of named parameters. Order is insertion order and is
/// the order used by checkpoints and the optimizer.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value, bool requires_grad = true);

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_.at(i); }
  const Parameter& operator[](std::size_t i) const { return params_.at(i); }

  Parameter* find(std::string_view name) noexcept;
  const Parameter* find(std::string_view name) const noexcept;
  std::size_t index_of(std::string_view name) const;

  /// Total scalar count across all parameters.
  std::size_t element_count() const noexcept;
  void zero_grad() noexcept;

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

using NodeId = std::size_t;
using NamedTensors = std::map<std::string, Tensor, std::less<>>;

enum class OpKind {
  kInput,
  kParam,
  kLinear,
  kConv2d,
  kAvgPool2d,
  kTanh,
  kFlatten,
  kLogSoftmax,
  kWeightedNll,
  kUniformCrossEntropy,
  kAdd,
  kScaleAdd,
};

std::string_view op_name(OpKind kind) noexcept;

/// Static computation graph with reverse-mode differentiation.
///
/// Nodes are appended through the builder methods and may only reference
/// existing nodes, so the node list is always a topological order. Input
/// nodes declare a shape in which 0 marks a free extent (the batch axis).
/// Parameter nodes read from and accumulate gradients into a ParameterSet
/// that must outlive the graph.
///
/// Layout conventions: images are [N, C, H, W], dense activations [N, D],
/// linear weights [out, in], convolution weights [F, C, k, k]. Convolution
/// is a valid (unpadded, stride 1) cross-correlation.
class Graph {
 public:
  explicit Graph(ParameterSet& params) : params_(&params) {}

  NodeId input(std::string name, Shape shape);
  NodeId param(std::string_view name);

  NodeId linear(NodeId x, NodeId weight, NodeId bias);
  NodeId conv2d(NodeId x, NodeId weight, NodeId bias);
  NodeId avg_pool2d(NodeId x, std::size_t window);
  NodeId tanh(NodeId x);
  NodeId flatten(NodeId x);
  NodeId log_softmax(NodeId x);

  /// -(1/N) sum_j w[y_j] * log_probs[j, y_j]; labels hold class indices.
  NodeId weighted_nll(NodeId log_probs, NodeId labels, std::vector<double> class_weights);
  /// -(1/N) sum_j (1/K) sum_i log_probs[j, i]: cross-entropy to the uniform target.
  NodeId uniform_cross_entropy(NodeId log_probs);
  NodeId add(NodeId a, NodeId b);
  /// a + s * b where s is a one-element node treated as a constant.
  NodeId scale_add(NodeId a, NodeId b, NodeId scale);

  /// Attaches a lookup name to a node (layer taps, outputs).
  void label(NodeId node, std::string name);
  std::optional<NodeId> find(std::string_view label) const;
  std::vector<std::string> labels() const;

  void set_output(std::string name, NodeId node);

  /// Evaluates every node. Returns the tensors registered with set_output.
  NamedTensors forward(const NamedTensors& inputs);

  /// Accumulates d(loss)/d(param) into every parameter that requires a gradient.
  void backward(NodeId loss);

  bool has_run() const noexcept { return ran_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  OpKind kind(NodeId node) const { return nodes_.at(node).kind; }
  const Tensor& value(NodeId node) const;
  /// Gradient of the last backward's loss with respect to a non-parameter node.
  const Tensor& grad(NodeId node) const;

  ParameterSet& parameters() noexcept { return *params_; }

 private:
  struct Node {
    OpKind kind = OpKind::kInput;
    std::vector<NodeId> inputs{};
    std::string name{};        // input name or parameter name
    Shape declared{};          // input nodes only
    std::size_t param_index = 0;
    std::size_t window = 0;    // pooling
    std::vector<double> class_weights{};
    bool needs_grad = false;
  };

  NodeId push(Node node);
  const Tensor& stored(NodeId id) const;
  void check_id(NodeId id, std::string_view op) const;
  void run_node(NodeId id);
  void backprop_node(NodeId id);
  Tensor& grad_slot(NodeId id);

  ParameterSet* params_;
  std::vector<Node> nodes_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
  std::vector<std::vector<double>> saved_;  // per-node forward context
  std::map<std::string, NodeId, std::less<>> labels_;
  std::vector<std::pair<std::string, NodeId>> outputs_;
  bool ran_ = false;
};

}  // namespace oodf
