#include "tcmt/task_covariance.hpp"

#include <algorithm>
#include <cmath>

namespace tcmt {

Matrix psd_sqrt(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("psd_sqrt: matrix not square");
  const double scale = std::max(1.0, a.frobenius_norm());
  if (asymmetry(a) > kSymmetryTolerance * scale) {
    throw NumericError("psd_sqrt: input is not symmetric (max asymmetry " + std::to_string(asymmetry(a)) + ")");
  }
  const auto eig = symmetric_eigen(a);
  const std::size_t n = a.rows();
  std::vector<double> roots(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lam = eig.values[k];
    if (lam < -kNegativeEigenTolerance * scale) {
      throw NumericError("psd_sqrt: eigenvalue " + std::to_string(lam) + " is negative");
    }
    roots[k] = std::sqrt(std::max(lam, 0.0));
  }
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += eig.vectors(i, k) * roots[k] * eig.vectors(j, k);
      s(i, j) = v;
      s(j, i) = v;
    }
  return s;
}

Matrix initial_covariance(std::size_t task_count) {
  Matrix u = Matrix::identity(task_count);
  u *= 1.0 / static_cast<double>(task_count);
  return u;
}

CovarianceUpdate update_covariance(const Matrix& weights) {
  if (!weights.all_finite()) throw NumericError("update_covariance: weight matrix has non-finite entries");
  const std::size_t n = weights.cols();
  if (n == 0) throw DimensionError("update_covariance: weight matrix has no columns");
  Matrix root = psd_sqrt(gram(weights));
  const double tr = root.trace();
  if (!(tr > 0.0)) return {initial_covariance(n), true};
  root *= 1.0 / tr;
  // Exact symmetry after scaling.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) root(j, i) = root(i, j);
  return {std::move(root), false};
}

Matrix correlation_matrix(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw DimensionError("correlation_matrix: matrix not square");
  const std::size_t n = cov.rows();
  std::vector<double> sd(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(cov(i, i) > 0.0)) {
      throw NumericError("correlation_matrix: non-positive variance at task " + std::to_string(i));
    }
    sd[i] = std::sqrt(cov(i, i));
  }
  Matrix c(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      c(i, j) = i == j ? 1.0 : std::clamp(cov(i, j) / (sd[i] * sd[j]), -1.0, 1.0);
  return c;
}

double GroupCorrelationReport::mean_over_points(std::size_t group,
                                                const std::vector<std::size_t>& points) const {
  double s = 0.0;
  for (std::size_t p : points) s += values.at(group).at(p);
  return points.empty() ? 0.0 : s / static_cast<double>(points.size());
}

std::size_t GroupCorrelationReport::best_group(const std::vector<std::size_t>& points) const {
  std::size_t best = 0;
  for (std::size_t g = 1; g < groups.size(); ++g) {
    if (mean_over_points(g, points) > mean_over_points(best, points)) best = g;
  }
  return best;
}

GroupCorrelationReport group_correlation_report(const Matrix& correlation, const TaskLayout& layout,
                                                bool normalize_per_attribute) {
  layout.validate();
  const std::size_t M = layout.landmark_count, P = layout.point_count(), T = layout.attribute_count();
  if (correlation.rows() != M + T || correlation.cols() != M + T) {
    throw DimensionError("group_correlation_report: correlation matrix is " + std::to_string(correlation.rows()) +
                         "x" + std::to_string(correlation.cols()) + ", layout has " + std::to_string(M + T) +
                         " tasks");
  }
  // Per attribute, per point: mean |C| over the point's two coordinates.
  std::vector<std::vector<double>> per_attr(T, std::vector<double>(P, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t p = 0; p < P; ++p) {
      per_attr[t][p] =
          0.5 * (std::abs(correlation(M + t, 2 * p)) + std::abs(correlation(M + t, 2 * p + 1)));
    }
    if (normalize_per_attribute) {
      double total = 0.0;
      for (double v : per_attr[t]) total += v;
      if (total > 0.0)
        for (double& v : per_attr[t]) v /= total;
    }
  }
  GroupCorrelationReport r;
  r.groups = layout.groups();
  r.point_count = P;
  for (const auto& g : r.groups) {
    const auto members = layout.attributes_in_group(g);
    if (members.empty()) throw DimensionError("attribute group '" + g + "' is empty");
    std::vector<double> row(P, 0.0);
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t t : members) row[p] += per_attr[t][p];
      row[p] /= static_cast<double>(members.size());
    }
    r.values.push_back(std::move(row));
  }
  return r;
}

}  // namespace tcmt
