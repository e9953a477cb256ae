#include "oodf/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "oodf/error.hpp"

namespace oodf {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::string dims(const Tensor& t) { return shape_string(t.shape()); }

[[noreturn]] void shape_fail(std::string_view op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void require_rank(std::string_view op, std::string_view what, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_fail(op, std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                       dims(t));
  }
}

// Column matrix of one image for a valid k x k cross-correlation:
// cols[(c*k + i)*k + j, oy*out_w + ox] = x[c, oy + i, ox + j].
void im2col(const double* image, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t k, double* cols) {
  const std::size_t out_h = height - k + 1;
  const std::size_t out_w = width - k + 1;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        double* row = cols + ((c * k + i) * k + j) * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const double* src = image + (c * height + oy + i) * width + j;
          std::copy(src, src + out_w, row + oy * out_w);
        }
      }
    }
  }
}

void col2im_add(const double* cols, std::size_t channels, std::size_t height, std::size_t width,
                std::size_t k, double* image) {
  const std::size_t out_h = height - k + 1;
  const std::size_t out_w = width - k + 1;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const double* row = cols + ((c * k + i) * k + j) * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          double* dst = image + (c * height + oy + i) * width + j;
          const double* src = row + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) dst[ox] += src[ox];
        }
      }
    }
  }
}

std::size_t checked_label(double raw, std::size_t row, std::size_t classes, std::string_view op) {
  const double rounded = std::round(raw);
  if (!std::isfinite(raw) || rounded != raw || rounded < 0 ||
      rounded >= static_cast<double>(classes)) {
    throw ValueError(std::string(op) + ": label " + std::to_string(raw) + " at index " +
                     std::to_string(row) + " outside [0, " + std::to_string(classes) + ")");
  }
  return static_cast<std::size_t>(rounded);
}

}  // namespace

std::string_view op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kLinear: return "linear";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kAvgPool2d: return "avg_pool2d";
    case OpKind::kTanh: return "tanh";
    case OpKind::kFlatten: return "flatten";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kWeightedNll: return "weighted_nll";
    case OpKind::kUniformCrossEntropy: return "uniform_cross_entropy";
    case OpKind::kAdd: return "add";
    case OpKind::kScaleAdd: return "scale_add";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// ParameterSet

Parameter& ParameterSet::add(std::string name, Tensor value, bool requires_grad) {
  if (find(name)) throw ValueError("parameter '" + name + "' already exists");
  Tensor grad(value.shape());
  params_.push_back({std::move(name), std::move(value), std::move(grad), requires_grad});
  return params_.back();
}

Parameter* ParameterSet::find(std::string_view name) noexcept {
  auto it = std::find_if(params_.begin(), params_.end(),
                         [&](const Parameter& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

const Parameter* ParameterSet::find(std::string_view name) const noexcept {
  return const_cast<ParameterSet*>(this)->find(name);
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw ValueError("unknown parameter '" + std::string(name) + "'");
}

std::size_t ParameterSet::element_count() const noexcept {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.value.size();
  return total;
}

void ParameterSet::zero_grad() noexcept {
  for (auto& p : params_) p.grad.fill(0.0);
}

// ---------------------------------------------------------------------------
// Graph construction

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) {
    if (nodes_.at(in).needs_grad) node.needs_grad = true;
  }
  nodes_.push_back(std::move(node));
  values_.emplace_back();
  grads_.emplace_back();
  saved_.emplace_back();
  ran_ = false;
  return nodes_.size() - 1;
}

void Graph::check_id(NodeId id, std::string_view op) const {
  if (id >= nodes_.size()) {
    throw ValueError(std::string(op) + ": node " + std::to_string(id) + " does not exist");
  }
}

NodeId Graph::input(std::string name, Shape shape) {
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::kInput && n.name == name) {
      throw ValueError("input '" + name + "' declared twice");
    }
  }
  Node node{OpKind::kInput, {}, std::move(name)};
  node.declared = std::move(shape);
  return push(std::move(node));
}

NodeId Graph::param(std::string_view name) {
  const std::size_t index = params_->index_of(name);
  Node node{OpKind::kParam, {}, std::string(name)};
  node.param_index = index;
  node.needs_grad = (*params_)[index].requires_grad;
  return push(std::move(node));
}

NodeId Graph::linear(NodeId x, NodeId weight, NodeId bias) {
  check_id(x, "linear");
  check_id(weight, "linear");
  check_id(bias, "linear");
  return push({OpKind::kLinear, {x, weight, bias}});
}

NodeId Graph::conv2d(NodeId x, NodeId weight, NodeId bias) {
  check_id(x, "conv2d");
  check_id(weight, "conv2d");
  check_id(bias, "conv2d");
  return push({OpKind::kConv2d, {x, weight, bias}});
}

NodeId Graph::avg_pool2d(NodeId x, std::size_t window) {
  check_id(x, "avg_pool2d");
  if (window == 0) throw ValueError("avg_pool2d: window must be positive");
  Node node{OpKind::kAvgPool2d, {x}};
  node.window = window;
  return push(std::move(node));
}

NodeId Graph::tanh(NodeId x) {
  check_id(x, "tanh");
  return push({OpKind::kTanh, {x}});
}

NodeId Graph::flatten(NodeId x) {
  check_id(x, "flatten");
  return push({OpKind::kFlatten, {x}});
}

NodeId Graph::log_softmax(NodeId x) {
  check_id(x, "log_softmax");
  return push({OpKind::kLogSoftmax, {x}});
}

NodeId Graph::weighted_nll(NodeId log_probs, NodeId labels, std::vector<double> class_weights) {
  check_id(log_probs, "weighted_nll");
  check_id(labels, "weighted_nll");
  for (double w : class_weights) {
    if (!(w > 0) || !std::isfinite(w)) {
      throw ValueError("weighted_nll: class weights must be positive and finite");
    }
  }
  Node node{OpKind::kWeightedNll, {log_probs, labels}};
  node.class_weights = std::move(class_weights);
  return push(std::move(node));
}

NodeId Graph::uniform_cross_entropy(NodeId log_probs) {
  check_id(log_probs, "uniform_cross_entropy");
  return push({OpKind::kUniformCrossEntropy, {log_probs}});
}

NodeId Graph::add(NodeId a, NodeId b) {
  check_id(a, "add");
  check_id(b, "add");
  return push({OpKind::kAdd, {a, b}});
}

NodeId Graph::scale_add(NodeId a, NodeId b, NodeId scale) {
  check_id(a, "scale_add");
  check_id(b, "scale_add");
  check_id(scale, "scale_add");
  return push({OpKind::kScaleAdd, {a, b, scale}});
}

void Graph::label(NodeId node, std::string name) {
  check_id(node, "label");
  labels_[std::move(name)] = node;
}

std::optional<NodeId> Graph::find(std::string_view name) const {
  auto it = labels_.find(name);
  if (it == labels_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Graph::labels() const {
  std::vector<std::pair<NodeId, std::string>> ordered;
  for (const auto& [name, id] : labels_) ordered.emplace_back(id, name);
  std::sort(ordered.begin(), ordered.end());
  std::vector<std::string> out;
  for (auto& [id, name] : ordered) out.push_back(std::move(name));
  return out;
}

void Graph::set_output(std::string name, NodeId node) {
  check_id(node, "set_output");
  outputs_.emplace_back(std::move(name), node);
}

const Tensor& Graph::stored(NodeId node) const {
  if (nodes_[node].kind == OpKind::kParam) return (*params_)[nodes_[node].param_index].value;
  return values_[node];
}

const Tensor& Graph::value(NodeId node) const {
  check_id(node, "value");
  if (nodes_[node].kind == OpKind::kParam) return (*params_)[nodes_[node].param_index].value;
  if (!ran_) throw Error("value: graph has not been evaluated");
  return values_[node];
}

const Tensor& Graph::grad(NodeId node) const {
  check_id(node, "grad");
  if (nodes_[node].kind == OpKind::kParam) return (*params_)[nodes_[node].param_index].grad;
  return grads_[node];
}

// ---------------------------------------------------------------------------
// Forward

NamedTensors Graph::forward(const NamedTensors& inputs) {
  ran_ = false;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    Node& node = nodes_[id];
    if (node.kind == OpKind::kInput) {
      auto it = inputs.find(node.name);
      if (it == inputs.end()) throw ValueError("forward: missing input '" + node.name + "'");
      const Tensor& given = it->second;
      bool ok = given.rank() == node.declared.size();
      for (std::size_t a = 0; ok && a < node.declared.size(); ++a) {
        ok = node.declared[a] == 0 || node.declared[a] == given.dim(a);
      }
      if (!ok) {
        throw ShapeError("forward: input '" + node.name + "' expects " +
                         shape_string(node.declared) + " (0 = any), got " + dims(given));
      }
      values_[id] = given;
      continue;
    }
    if (node.kind == OpKind::kParam) continue;
    run_node(id);
    if (!values_[id].all_finite()) {
      throw NumericError(std::string(op_name(node.kind)) + ": non-finite output at node " +
                         std::to_string(id));
    }
  }
  ran_ = true;
  NamedTensors out;
  for (const auto& [name, id] : outputs_) out[name] = value(id);
  return out;
}

void Graph::run_node(NodeId id) {
  Node& node = nodes_[id];
  const auto in = [&](std::size_t k) -> const Tensor& { return stored(node.inputs[k]); };
  Tensor& out = values_[id];

  switch (node.kind) {
    case OpKind::kLinear: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      require_rank("linear", "input", x, 2);
      require_rank("linear", "weight", w, 2);
      require_rank("linear", "bias", b, 1);
      if (x.dim(1) != w.dim(1) || b.dim(0) != w.dim(0)) {
        shape_fail("linear", "input " + dims(x) + ", weight " + dims(w) + ", bias " + dims(b) +
                                 " are incompatible");
      }
      const std::size_t n = x.dim(0), in_dim = w.dim(1), out_dim = w.dim(0);
      out = Tensor({n, out_dim});
      MatrixMap y(out.raw(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_dim));
      ConstMatrixMap xm(x.raw(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in_dim));
      ConstMatrixMap wm(w.raw(), static_cast<Eigen::Index>(out_dim),
                        static_cast<Eigen::Index>(in_dim));
      Eigen::Map<const Eigen::RowVectorXd> bv(b.raw(), static_cast<Eigen::Index>(out_dim));
      y.noalias() = xm * wm.transpose();
      y.rowwise() += bv;
      break;
    }
    case OpKind::kConv2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      require_rank("conv2d", "input", x, 4);
      require_rank("conv2d", "weight", w, 4);
      require_rank("conv2d", "bias", b, 1);
      const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
      const std::size_t f = w.dim(0), k = w.dim(2);
      if (w.dim(1) != c || w.dim(3) != k || b.dim(0) != f) {
        shape_fail("conv2d", "input " + dims(x) + ", weight " + dims(w) + ", bias " + dims(b) +
                                 " are incompatible");
      }
      if (k > h || k > wd) {
        shape_fail("conv2d", "kernel " + std::to_string(k) + " larger than input " + dims(x));
      }
      const std::size_t oh = h - k + 1, ow = wd - k + 1;
      const std::size_t patch = c * k * k, plane = oh * ow;
      out = Tensor({n, f, oh, ow});
      auto& cols = saved_[id];
      cols.assign(n * patch * plane, 0.0);
      ConstMatrixMap wm(w.raw(), static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(patch));
      Eigen::Map<const Eigen::VectorXd> bv(b.raw(), static_cast<Eigen::Index>(f));
      for (std::size_t s = 0; s < n; ++s) {
        double* col = cols.data() + s * patch * plane;
        im2col(x.raw() + s * c * h * wd, c, h, wd, k, col);
        ConstMatrixMap cm(col, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
        MatrixMap y(out.raw() + s * f * plane, static_cast<Eigen::Index>(f),
                    static_cast<Eigen::Index>(plane));
        y.noalias() = wm * cm;
        y.colwise() += bv;
      }
      break;
    }
    case OpKind::kAvgPool2d: {
      const Tensor& x = in(0);
      require_rank("avg_pool2d", "input", x, 4);
      const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), k = node.window;
      if (h % k != 0 || w % k != 0) {
        shape_fail("avg_pool2d", "input " + dims(x) + " is not divisible by window " +
                                     std::to_string(k));
      }
      const std::size_t oh = h / k, ow = w / k;
      out = Tensor({n, c, oh, ow});
      const double scale = 1.0 / static_cast<double>(k * k);
      for (std::size_t p = 0; p < n * c; ++p) {
        const double* src = x.raw() + p * h * w;
        double* dst = out.raw() + p * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            double sum = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
              for (std::size_t j = 0; j < k; ++j) sum += src[(oy * k + i) * w + ox * k + j];
            }
            dst[oy * ow + ox] = sum * scale;
          }
        }
      }
      break;
    }
    case OpKind::kTanh: {
      const Tensor& x = in(0);
      out = Tensor(x.shape());
      std::transform(x.data().begin(), x.data().end(), out.data().begin(),
                     [](double v) { return std::tanh(v); });
      break;
    }
    case OpKind::kFlatten: {
      const Tensor& x = in(0);
      if (x.rank() < 1) shape_fail("flatten", "input must have a batch axis, got " + dims(x));
      const std::size_t n = x.dim(0);
      out = x.reshaped({n, n ? x.size() / n : 0});
      break;
    }
    case OpKind::kLogSoftmax: {
      const Tensor& x = in(0);
      require_rank("log_softmax", "input", x, 2);
      const std::size_t n = x.dim(0), k = x.dim(1);
      if (k == 0) shape_fail("log_softmax", "input " + dims(x) + " has no classes");
      out = Tensor(x.shape());
      for (std::size_t r = 0; r < n; ++r) {
        const double* row = x.raw() + r * k;
        const double peak = *std::max_element(row, row + k);
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) sum += std::exp(row[i] - peak);
        const double log_norm = peak + std::log(sum);
        for (std::size_t i = 0; i < k; ++i) out[r * k + i] = row[i] - log_norm;
      }
      break;
    }
    case OpKind::kWeightedNll: {
      const Tensor& lp = in(0);
      const Tensor& labels = in(1);
      require_rank("weighted_nll", "log-probabilities", lp, 2);
      const std::size_t n = lp.dim(0), k = lp.dim(1);
      if (n == 0) throw ValueError("weighted_nll: empty batch");
      if (labels.size() != n) {
        shape_fail("weighted_nll", "labels " + dims(labels) + " do not match batch " + dims(lp));
      }
      if (node.class_weights.size() != k) {
        shape_fail("weighted_nll", std::to_string(node.class_weights.size()) +
                                       " class weights for " + std::to_string(k) + " classes");
      }
      double sum = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t y = checked_label(labels[r], r, k, "weighted_nll");
        sum += node.class_weights[y] * lp[r * k + y];
      }
      out = Tensor::scalar(-sum / static_cast<double>(n));
      break;
    }
    case OpKind::kUniformCrossEntropy: {
      const Tensor& lp = in(0);
      require_rank("uniform_cross_entropy", "log-probabilities", lp, 2);
      const std::size_t n = lp.dim(0), k = lp.dim(1);
      if (n == 0) throw ValueError("uniform_cross_entropy: empty batch");
      double sum = 0.0;
      for (double v : lp.data()) sum += v;
      out = Tensor::scalar(-sum / static_cast<double>(n * k));
      break;
    }
    case OpKind::kAdd: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape() != b.shape()) shape_fail("add", dims(a) + " vs " + dims(b));
      out = a;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
      break;
    }
    case OpKind::kScaleAdd: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const Tensor& s = in(2);
      if (a.shape() != b.shape()) shape_fail("scale_add", dims(a) + " vs " + dims(b));
      if (s.size() != 1) shape_fail("scale_add", "scale must hold one value, got " + dims(s));
      out = a;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += s[0] * b[i];
      break;
    }
    case OpKind::kInput:
    case OpKind::kParam:
      break;
  }
}

// ---------------------------------------------------------------------------
// Backward

Tensor& Graph::grad_slot(NodeId id) {
  const Node& node = nodes_[id];
  if (node.kind == OpKind::kParam) return (*params_)[node.param_index].grad;
  Tensor& g = grads_[id];
  if (g.shape() != values_[id].shape()) g = Tensor(values_[id].shape());
  return g;
}

void Graph::backward(NodeId loss) {
  check_id(loss, "backward");
  if (!ran_) throw Error("backward: forward has not been run on this graph");
  const Tensor& loss_value = value(loss);
  if (loss_value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, node " + std::to_string(loss) + " is " +
                     dims(loss_value));
  }
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].kind != OpKind::kParam) grads_[id] = Tensor(values_[id].shape());
  }
  // Parameters accumulate across calls; seed the loss through its own slot.
  if (nodes_[loss].kind == OpKind::kParam) {
    Parameter& p = (*params_)[nodes_[loss].param_index];
    if (p.requires_grad) p.grad[0] += 1.0;
    return;
  }
  grads_[loss][0] = 1.0;
  for (NodeId id = loss + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.needs_grad || node.kind == OpKind::kInput || node.kind == OpKind::kParam) continue;
    backprop_node(id);
  }
}

void Graph::backprop_node(NodeId id) {
  const Node& node = nodes_[id];
  const Tensor& dy = grads_[id];
  const auto needs = [&](std::size_t k) {
    const Node& src = nodes_[node.inputs[k]];
    return src.needs_grad && !(src.kind == OpKind::kParam &&
                               !(*params_)[src.param_index].requires_grad);
  };
  const auto in = [&](std::size_t k) -> const Tensor& { return stored(node.inputs[k]); };

  switch (node.kind) {
    case OpKind::kLinear: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const auto n = static_cast<Eigen::Index>(x.dim(0));
      const auto in_dim = static_cast<Eigen::Index>(w.dim(1));
      const auto out_dim = static_cast<Eigen::Index>(w.dim(0));
      ConstMatrixMap dym(dy.raw(), n, out_dim);
      if (needs(0)) {
        MatrixMap dx(grad_slot(node.inputs[0]).raw(), n, in_dim);
        dx.noalias() += dym * ConstMatrixMap(w.raw(), out_dim, in_dim);
      }
      if (needs(1)) {
        MatrixMap dw(grad_slot(node.inputs[1]).raw(), out_dim, in_dim);
        dw.noalias() += dym.transpose() * ConstMatrixMap(x.raw(), n, in_dim);
      }
      if (needs(2)) {
        Eigen::Map<Eigen::RowVectorXd> db(grad_slot(node.inputs[2]).raw(), out_dim);
        db += dym.colwise().sum();
      }
      break;
    }
    case OpKind::kConv2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
      const std::size_t f = w.dim(0), k = w.dim(2);
      const std::size_t patch = c * k * k, plane = (h - k + 1) * (wd - k + 1);
      const auto fi = static_cast<Eigen::Index>(f);
      const auto pi = static_cast<Eigen::Index>(patch);
      const auto li = static_cast<Eigen::Index>(plane);
      ConstMatrixMap wm(w.raw(), fi, pi);
      const bool want_x = needs(0), want_w = needs(1), want_b = needs(2);
      std::vector<double> dcols(want_x ? patch * plane : 0);
      for (std::size_t s = 0; s < n; ++s) {
        ConstMatrixMap dym(dy.raw() + s * f * plane, fi, li);
        ConstMatrixMap cm(saved_[id].data() + s * patch * plane, pi, li);
        if (want_w) {
          MatrixMap dw(grad_slot(node.inputs[1]).raw(), fi, pi);
          dw.noalias() += dym * cm.transpose();
        }
        if (want_b) {
          Eigen::Map<Eigen::VectorXd> db(grad_slot(node.inputs[2]).raw(), fi);
          db += dym.rowwise().sum();
        }
        if (want_x) {
          MatrixMap dc(dcols.data(), pi, li);
          dc.noalias() = wm.transpose() * dym;
          col2im_add(dcols.data(), c, h, wd, k, grad_slot(node.inputs[0]).raw() + s * c * h * wd);
        }
      }
      break;
    }
    case OpKind::kAvgPool2d: {
      if (!needs(0)) break;
      const Tensor& x = in(0);
      const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), k = node.window;
      const std::size_t oh = h / k, ow = w / k;
      const double scale = 1.0 / static_cast<double>(k * k);
      Tensor& dx = grad_slot(node.inputs[0]);
      for (std::size_t p = 0; p < n * c; ++p) {
        const double* src = dy.raw() + p * oh * ow;
        double* dst = dx.raw() + p * h * w;
        for (std::size_t yy = 0; yy < h; ++yy) {
          for (std::size_t xx = 0; xx < w; ++xx) {
            dst[yy * w + xx] += src[(yy / k) * ow + xx / k] * scale;
          }
        }
      }
      break;
    }
    case OpKind::kTanh: {
      if (!needs(0)) break;
      const Tensor& y = values_[id];
      Tensor& dx = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case OpKind::kFlatten: {
      if (!needs(0)) break;
      Tensor& dx = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      break;
    }
    case OpKind::kLogSoftmax: {
      if (!needs(0)) break;
      const Tensor& y = values_[id];
      const std::size_t n = y.dim(0), k = y.dim(1);
      Tensor& dx = grad_slot(node.inputs[0]);
      for (std::size_t r = 0; r < n; ++r) {
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) total += dy[r * k + i];
        for (std::size_t i = 0; i < k; ++i) {
          dx[r * k + i] += dy[r * k + i] - std::exp(y[r * k + i]) * total;
        }
      }
      break;
    }
    case OpKind::kWeightedNll: {
      if (!needs(0)) break;
      const Tensor& lp = in(0);
      const Tensor& labels = in(1);
      const std::size_t n = lp.dim(0), k = lp.dim(1);
      Tensor& dlp = grad_slot(node.inputs[0]);
      const double scale = dy[0] / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        const auto y = static_cast<std::size_t>(labels[r]);
        dlp[r * k + y] -= node.class_weights[y] * scale;
      }
      break;
    }
    case OpKind::kUniformCrossEntropy: {
      if (!needs(0)) break;
      const Tensor& lp = in(0);
      Tensor& dlp = grad_slot(node.inputs[0]);
      const double step = dy[0] / static_cast<double>(lp.size());
      for (std::size_t i = 0; i < lp.size(); ++i) dlp[i] -= step;
      break;
    }
    case OpKind::kAdd: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!needs(k)) continue;
        Tensor& d = grad_slot(node.inputs[k]);
        for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
      }
      break;
    }
    case OpKind::kScaleAdd: {
      const double s = in(2)[0];
      if (needs(0)) {
        Tensor& da = grad_slot(node.inputs[0]);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (needs(1)) {
        Tensor& db = grad_slot(node.inputs[1]);
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += s * dy[i];
      }
      break;
    }
    case OpKind::kInput:
    case OpKind::kParam:
      break;
  }
}

}  // namespace oodf
