#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace oodf {

using Shape = std::vector<std::size_t>;

/// Number of elements described by a shape. The empty shape is a scalar.
std::size_t shape_size(const Shape& shape) noexcept;

/// "[2, 3, 4]"
std::string shape_string(const Shape& shape);

/// Dense row-major array of 64-bit floats.
///
/// The element count always equals the product of the shape. Tensors are
/// plain values: copying copies the buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(Shape{1}, {value}); }
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Row-major element of a rank-2 tensor.
  double& at(std::size_t row, std::size_t col) { return data_[row * shape_.at(1) + col]; }
  double at(std::size_t row, std::size_t col) const { return data_[row * shape_.at(1) + col]; }

  /// Returns a copy with a new shape of the same element count.
  Tensor reshaped(Shape shape) const;

  /// Contiguous rows [begin, end) along axis 0.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;

  void fill(double value) noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

}  // namespace oodf
