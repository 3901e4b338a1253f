#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tcmt {

/// A sample counts as a failure when its mean error is strictly above this.
inline constexpr double kFailureThreshold = 0.10;

struct PointErrors {
  std::vector<double> per_point;  // distance / inter-ocular distance
  double mean = 0.0;
};

/**
 * Normalized landmark error. `pred` and `truth` hold interleaved x,y pairs;
 * the inter-ocular distance is measured on `truth` between the two eye points.
 * Throws DimensionError for odd or mismatched sizes and bad eye indices,
 * NumericError when the ground-truth eyes coincide.
 */
PointErrors mean_error(std::span<const double> pred, std::span<const double> truth, std::size_t left_eye,
                       std::size_t right_eye);

/// Fraction of samples whose mean error is > kFailureThreshold. Throws on empty input.
double failure_rate(std::span<const double> sample_errors, double threshold = kFailureThreshold);

/// Fraction of samples with error ≤ each threshold. Thresholds must be ascending.
std::vector<double> cumulative_curve(std::span<const double> sample_errors, std::span<const double> thresholds);

/// (base − variant) / base. Throws NumericError when base is 0.
double relative_improvement(double base_error, double variant_error);

/// Evenly spaced thresholds 0, step, ..., up to and including `max`.
std::vector<double> curve_thresholds(double max = 0.25, double step = 0.005);

struct MetricsReport {
  std::vector<double> per_point_mean;  // per landmark point, averaged over samples
  double mean_error = 0.0;
  double failure_rate = 0.0;
  std::vector<double> thresholds;
  std::vector<double> curve;
  std::vector<double> sample_errors;
  std::size_t samples = 0;

  /// point,mean_error rows followed by overall and failure_rate rows.
  std::string report_csv() const;
  /// threshold,fraction rows.
  std::string curve_csv() const;
};

/// Builds the report from per-sample predictions and truths (each M values).
MetricsReport evaluate_predictions(const std::vector<std::vector<double>>& predictions,
                                   const std::vector<std::vector<double>>& truths, std::size_t left_eye,
                                   std::size_t right_eye, std::vector<double> thresholds = curve_thresholds());

}  // namespace tcmt
