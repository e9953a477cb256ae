#include "oodf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "oodf/error.hpp"

namespace oodf {

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor: shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw ShapeError("reshape: cannot view " + shape_string(shape_) + " as " +
                     shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (rank() == 0 || begin > end || end > shape_[0]) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + shape_string(shape_));
  }
  const std::size_t row = shape_[0] ? size() / shape_[0] : 0;
  Shape out_shape = shape_;
  out_shape[0] = end - begin;
  return Tensor(std::move(out_shape),
                std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                    data_.begin() + static_cast<std::ptrdiff_t>(end * row)));
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack: no tensors given");
  const Shape& item_shape = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), item_shape.begin(), item_shape.end());
  std::vector<double> data;
  data.reserve(shape_size(shape));
  for (const Tensor& t : items) {
    if (t.shape() != item_shape) {
      throw ShapeError("stack: expected " + shape_string(item_shape) + ", got " +
                       shape_string(t.shape()));
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace oodf
