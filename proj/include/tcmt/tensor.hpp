#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcmt {

/// Thrown when a tensor or matrix does not have the shape an operation needs.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces NaN/Inf or hits a singular system.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/**
 * Dense row-major tensor of doubles.
 *
 * The product of the shape always equals the number of stored values; an
 * empty shape denotes an empty tensor (size 0), not a scalar.
 */
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);
  Tensor(std::initializer_list<std::size_t> shape, double fill = 0.0)
      : Tensor(Shape(shape), fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& storage() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Rank-3 (channel, row, col) accessors.
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }

  void fill(double v);
  /// Returns a copy with a new shape holding the same number of values.
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;
  double sum() const;
  double squared_norm() const;

  Tensor& operator+=(const Tensor& other);
  /// this += scale * other
  void add_scaled(const Tensor& other, double scale);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

std::size_t shape_product(const Shape& shape);

/// Throws DimensionError naming `what` unless `t` has exactly `expected` shape.
void require_shape(const Tensor& t, const Shape& expected, const std::string& what);

/// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(std::span<const double> values, const std::string& what);

}  // namespace tcmt
