#include "tcmt/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "tcmt/kv_text.hpp"
#include "tcmt/tensor.hpp"

namespace tcmt {

PointErrors mean_error(std::span<const double> pred, std::span<const double> truth, std::size_t left_eye,
                       std::size_t right_eye) {
  if (pred.size() != truth.size()) throw DimensionError("mean_error: prediction and truth sizes differ");
  if (truth.empty() || truth.size() % 2) throw DimensionError("mean_error: need a nonzero, even number of coordinates");
  const std::size_t P = truth.size() / 2;
  if (left_eye >= P || right_eye >= P || left_eye == right_eye) {
    throw DimensionError("mean_error: eye indices must be distinct points below " + std::to_string(P));
  }
  const double iod = std::hypot(truth[2 * left_eye] - truth[2 * right_eye],
                                truth[2 * left_eye + 1] - truth[2 * right_eye + 1]);
  if (!(iod > 0.0)) throw NumericError("mean_error: ground-truth eye points coincide");
  PointErrors e;
  e.per_point.resize(P);
  double s = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    e.per_point[p] = std::hypot(pred[2 * p] - truth[2 * p], pred[2 * p + 1] - truth[2 * p + 1]) / iod;
    s += e.per_point[p];
  }
  e.mean = s / static_cast<double>(P);
  return e;
}

double failure_rate(std::span<const double> sample_errors, double threshold) {
  if (sample_errors.empty()) throw DimensionError("failure_rate: no samples");
  const auto failures = std::count_if(sample_errors.begin(), sample_errors.end(), [&](double e) { return e > threshold; });
  return static_cast<double>(failures) / static_cast<double>(sample_errors.size());
}

std::vector<double> cumulative_curve(std::span<const double> sample_errors, std::span<const double> thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw DimensionError("cumulative_curve: thresholds must be ascending");
  }
  std::vector<double> out(thresholds.size(), 0.0);
  if (sample_errors.empty()) return out;
  std::vector<double> sorted(sample_errors.begin(), sample_errors.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), thresholds[k]) - sorted.begin();
    out[k] = static_cast<double>(count) / static_cast<double>(sorted.size());
  }
  return out;
}

double relative_improvement(double base_error, double variant_error) {
  if (base_error == 0.0) throw NumericError("relative_improvement: baseline error is zero");
  return (base_error - variant_error) / base_error;
}

std::vector<double> curve_thresholds(double max, double step) {
  std::vector<double> t;
  if (!(step > 0.0) || !(max >= 0.0)) throw DimensionError("curve_thresholds: need step > 0 and max >= 0");
  const auto n = static_cast<std::size_t>(std::floor(max / step + 1e-9));
  // k / (1/step) keeps round thresholds such as 0.10 exact when 1/step is an integer.
  const double per_unit = 1.0 / step;
  const bool integral = std::abs(per_unit - std::round(per_unit)) < 1e-9;
  for (std::size_t k = 0; k <= n; ++k) {
    t.push_back(integral ? static_cast<double>(k) / std::round(per_unit) : static_cast<double>(k) * step);
  }
  return t;
}

std::string MetricsReport::report_csv() const {
  std::string s = "point,mean_error\n";
  for (std::size_t p = 0; p < per_point_mean.size(); ++p) {
    s += std::to_string(p) + "," + format_double(per_point_mean[p]) + "\n";
  }
  s += "overall," + format_double(mean_error) + "\n";
  s += "failure_rate," + format_double(failure_rate) + "\n";
  return s;
}

std::string MetricsReport::curve_csv() const {
  std::string s = "threshold,fraction\n";
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    s += format_double(thresholds[k]) + "," + format_double(curve[k]) + "\n";
  }
  return s;
}

MetricsReport evaluate_predictions(const std::vector<std::vector<double>>& predictions,
                                   const std::vector<std::vector<double>>& truths, std::size_t left_eye,
                                   std::size_t right_eye, std::vector<double> thresholds) {
  if (predictions.size() != truths.size()) throw DimensionError("evaluate: prediction and truth counts differ");
  if (truths.empty()) throw DimensionError("evaluate: no samples");
  MetricsReport r;
  r.samples = truths.size();
  r.per_point_mean.assign(truths.front().size() / 2, 0.0);
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const PointErrors e = mean_error(predictions[i], truths[i], left_eye, right_eye);
    if (e.per_point.size() != r.per_point_mean.size()) throw DimensionError("evaluate: landmark counts differ");
    for (std::size_t p = 0; p < e.per_point.size(); ++p) r.per_point_mean[p] += e.per_point[p];
    r.sample_errors.push_back(e.mean);
  }
  const double n = static_cast<double>(r.samples);
  for (double& v : r.per_point_mean) v /= n;
  double s = 0.0;
  for (double e : r.sample_errors) s += e;
  r.mean_error = s / n;
  r.failure_rate = failure_rate(r.sample_errors);
  r.thresholds = std::move(thresholds);
  r.curve = cumulative_curve(r.sample_errors, r.thresholds);
  return r;
}

}  // namespace tcmt
