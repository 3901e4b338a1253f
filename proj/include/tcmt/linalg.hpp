#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tcmt/tensor.hpp"

namespace tcmt {

/// Small dense row-major matrix used for the task-level linear algebra
/// (weight matrix, task covariance). Sizes are at most a few hundred.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  Matrix transpose() const;
  double trace() const;
  double frobenius_norm() const;
  bool all_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// AᵀA.
Matrix gram(const Matrix& a);

/// Largest |A - Aᵀ| entry; 0 for a symmetric matrix.
double asymmetry(const Matrix& a);

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // columns are eigenvectors
};

/// Eigendecomposition of a symmetric matrix (only the lower triangle is read).
SymmetricEigen symmetric_eigen(const Matrix& a);

/// Solves A X = B for symmetric positive definite A by Cholesky; throws NumericError otherwise.
Matrix spd_solve(const Matrix& a, const Matrix& b);

/// A + ridge·I.
Matrix add_ridge(Matrix a, double ridge);

}  // namespace tcmt
