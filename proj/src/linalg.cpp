#include "tcmt/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace tcmt {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": " + dims(a) + " vs " + dims(b));
  }
}

void require_square(const Matrix& a, const char* op) {
  if (a.rows() != a.cols()) throw DimensionError(std::string(op) + ": matrix " + dims(a) + " not square");
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw DimensionError("matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " needs " + std::to_string(rows * cols) + " values, got " +
                         std::to_string(values_.size()));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Matrix::trace() const {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
  return t;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

bool Matrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same(*this, other, "matrix +=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same(*this, other, "matrix -=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matrix product: " + dims(a) + " * " + dims(b));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix gram(const Matrix& a) {
  Matrix g(a.cols(), a.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = i; j < a.cols(); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, i) * a(r, j);
      g(i, j) = s;
      g(j, i) = s;
    }
  return g;
}

double asymmetry(const Matrix& a) {
  require_square(a, "asymmetry");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) worst = std::max(worst, std::abs(a(i, j) - a(j, i)));
  return worst;
}

namespace {

using EigenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EigenMatrix> view(const Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

}  // namespace

SymmetricEigen symmetric_eigen(const Matrix& a) {
  require_square(a, "symmetric_eigen");
  const std::size_t n = a.rows();
  SymmetricEigen out{std::vector<double>(n), Matrix(n, n)};
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<EigenMatrix> solver(view(a));
  if (solver.info() != Eigen::Success) throw NumericError("symmetric_eigen: decomposition did not converge");
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = solver.eigenvalues()(static_cast<Eigen::Index>(k));
    for (std::size_t r = 0; r < n; ++r) {
      out.vectors(r, k) = solver.eigenvectors()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
    }
  }
  return out;
}

Matrix spd_solve(const Matrix& a, const Matrix& b) {
  require_square(a, "spd_solve");
  if (a.rows() != b.rows()) throw DimensionError("spd_solve: " + dims(a) + " vs rhs " + dims(b));
  Eigen::LLT<EigenMatrix> llt(view(a));
  if (llt.info() != Eigen::Success) throw NumericError("spd_solve: matrix is not positive definite");
  const EigenMatrix x = llt.solve(view(b));
  return Matrix(b.rows(), b.cols(), std::vector<double>(x.data(), x.data() + x.size()));
}

Matrix add_ridge(Matrix a, double ridge) {
  require_square(a, "add_ridge");
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) += ridge;
  return a;
}

}  // namespace tcmt
