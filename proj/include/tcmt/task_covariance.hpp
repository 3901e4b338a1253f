#pragma once

#include <string>
#include <vector>

#include "tcmt/linalg.hpp"
#include "tcmt/multitask_head.hpp"

namespace tcmt {

/// Ridge added to Υ before any solve against it.
inline constexpr double kCovarianceRidge = 1e-8;

/// Eigenvalues below this (in absolute terms) are treated as roundoff and floored to 0.
inline constexpr double kNegativeEigenTolerance = 1e-10;

/// Inputs whose largest |A − Aᵀ| entry exceeds this (relative to max(1, ‖A‖_F)) are rejected.
inline constexpr double kSymmetryTolerance = 1e-9;

/**
 * Principal square root of a symmetric PSD matrix via its eigendecomposition.
 * Negative eigenvalues down to −1e-10 (relative) are floored to zero; more
 * negative ones, or an asymmetric input, raise NumericError.
 */
Matrix psd_sqrt(const Matrix& a);

struct CovarianceUpdate {
  Matrix covariance;        // Υ, trace 1
  bool degenerate = false;  // W was all zeros; Υ = I/(M+T)
};

/// Υ = (WᵀW)^{1/2} / tr((WᵀW)^{1/2}), the minimizer of tr(WΥ⁻¹Wᵀ) over PSD Υ with tr(Υ) ≤ 1.
CovarianceUpdate update_covariance(const Matrix& weights);

/// Initial Υ before the first update: I/(M+T).
Matrix initial_covariance(std::size_t task_count);

/// C_ij = Υ_ij / sqrt(Υ_ii Υ_jj). Throws NumericError on a non-positive diagonal.
Matrix correlation_matrix(const Matrix& covariance);

/// Mean |C| between each attribute group and each landmark point.
struct GroupCorrelationReport {
  std::vector<std::string> groups;
  std::size_t point_count = 0;
  std::vector<std::vector<double>> values;  // [group][point]

  /// Average of values[group] over the given points.
  double mean_over_points(std::size_t group, const std::vector<std::size_t>& points) const;
  /// Group index with the largest mean over `points` (first on ties).
  std::size_t best_group(const std::vector<std::size_t>& points) const;
};

/**
 * For each group g and point p: mean of |C(attr, coord)| over attributes in g
 * and the two coordinates of p. With `normalize_per_attribute`, each
 * attribute's row over points is first scaled to sum to one.
 */
GroupCorrelationReport group_correlation_report(const Matrix& correlation, const TaskLayout& layout,
                                                bool normalize_per_attribute = false);

}  // namespace tcmt
