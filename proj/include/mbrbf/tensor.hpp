#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mbrbf {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Every dimension is at least 1 and
/// product(shape) == size().
class Tensor {
 public:
  /// A single zero, shape [1].
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Element access by multi-index, bounds-checked.
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  std::vector<std::size_t> strides() const;
  std::size_t offset(std::span<const std::size_t> index) const;

  /// Contiguous slice [first*inner, (first+1)*inner) along axis 0.
  std::span<double> row(std::size_t first);
  std::span<const double> row(std::size_t first) const;

  void fill(double value);
  bool all_finite() const;

  /// Same shape and bitwise-identical payload.
  bool bit_equal(const Tensor& other) const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Rank-1 view of the same data in row-major order.
Tensor flatten(const Tensor& t);

/// Inverse of flatten; the element count must match.
Tensor reshape(const Tensor& t, Shape shape);

}  // namespace mbrbf
