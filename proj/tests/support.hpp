#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "tcmt/linalg.hpp"
#include "tcmt/tensor.hpp"

namespace tcmt::test {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

/// Random symmetric positive definite matrix: AAᵀ + n·I scaled by `shift`.
inline Matrix random_spd(std::size_t n, std::mt19937_64& rng, double shift = 0.5) {
  Matrix a = random_matrix(n, n, rng);
  Matrix s = a * a.transpose();
  for (std::size_t i = 0; i < n; ++i) s(i, i) += shift * static_cast<double>(n);
  return s;
}

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂), or 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Central differences of f with respect to every entry of `params`, restored afterwards.
inline std::vector<double> numeric_gradient(std::span<double> params, const std::function<double()>& f,
                                            double h = 1e-6) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = f();
    params[i] = keep - h;
    const double down = f();
    params[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Weighted sum Σ w_i t_i: a scalar loss whose gradient with respect to t is w.
inline double dot(std::span<const double> w, std::span<const double> t) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * t[i];
  return s;
}

}  // namespace tcmt::test
