#include "tcmt/multitask_head.hpp"

#include <algorithm>
#include <cmath>

#include "tcmt/kv_text.hpp"

namespace tcmt {

void TaskLayout::validate() const {
  if (landmark_count == 0 || landmark_count % 2 != 0) {
    throw DimensionError("landmark count M must be a positive even number, got " +
                         std::to_string(landmark_count));
  }
  if (attribute_groups.size() != attribute_names.size()) {
    throw DimensionError("every attribute needs a group label (" + std::to_string(attribute_names.size()) +
                         " names, " + std::to_string(attribute_groups.size()) + " groups)");
  }
  for (const auto& g : attribute_groups) {
    if (g.empty()) throw DimensionError("attribute group label is empty");
  }
  if (left_eye >= point_count() || right_eye >= point_count() || left_eye == right_eye) {
    throw DimensionError("eye point indices must be distinct and below " + std::to_string(point_count()));
  }
}

std::vector<std::string> TaskLayout::groups() const {
  std::vector<std::string> out;
  for (const auto& g : attribute_groups) {
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  }
  return out;
}

std::vector<std::size_t> TaskLayout::attributes_in_group(const std::string& group) const {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < attribute_groups.size(); ++t) {
    if (attribute_groups[t] == group) out.push_back(t);
  }
  return out;
}

TaskLayout TaskLayout::with_attributes(const std::vector<std::size_t>& keep) const {
  TaskLayout out = *this;
  out.attribute_names.clear();
  out.attribute_groups.clear();
  for (std::size_t t : keep) {
    out.attribute_names.push_back(attribute_names.at(t));
    out.attribute_groups.push_back(attribute_groups.at(t));
  }
  return out;
}

std::string TaskLayout::attribute_list() const {
  std::string out;
  for (std::size_t t = 0; t < attribute_names.size(); ++t) {
    if (t) out += ';';
    out += attribute_names[t] + ":" + attribute_groups[t];
  }
  return out;
}

void TaskLayout::parse_attribute_list(const std::string& text, TaskLayout& layout) {
  layout.attribute_names.clear();
  layout.attribute_groups.clear();
  if (trim(text).empty()) return;
  for (const auto& item : split(text, ';')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2 || trim(parts[0]).empty() || trim(parts[1]).empty()) {
      throw ConfigError("attribute entry '" + item + "': expected name:group");
    }
    layout.attribute_names.push_back(trim(parts[0]));
    layout.attribute_groups.push_back(trim(parts[1]));
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  // ln f(z) = −ln(1 + e^{−z})
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

double cross_entropy_logit(double z, double label) {
  // ln(1 − f(z)) = ln f(−z)
  const double ce = -(label * log_sigmoid(z) + (1.0 - label) * log_sigmoid(-z));
  return std::min(ce, -std::log(kProbabilityFloor));
}

namespace {

void check_head(std::span<const double> x, const Matrix& weights, std::size_t landmark_count) {
  if (x.size() != weights.rows()) {
    throw DimensionError("feature axis: W has " + std::to_string(weights.rows()) + " rows, feature has " +
                         std::to_string(x.size()) + " values");
  }
  if (landmark_count > weights.cols()) {
    throw DimensionError("landmark count " + std::to_string(landmark_count) + " exceeds W's " +
                         std::to_string(weights.cols()) + " columns");
  }
}

double column_dot(std::span<const double> x, const Matrix& w, std::size_t col) {
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) s += w(d, col) * x[d];
  return s;
}

void check_targets(const Matrix& weights, std::size_t M, const HeadTargets& targets,
                   std::span<const double> lambda) {
  const std::size_t T = weights.cols() - M;
  if (targets.landmarks.size() != M) {
    throw DimensionError("landmark target axis: expected " + std::to_string(M) + ", got " +
                         std::to_string(targets.landmarks.size()));
  }
  if (targets.attributes.size() != T || targets.mask.size() != T || lambda.size() != T) {
    throw DimensionError("attribute axis: expected " + std::to_string(T) + " labels, mask entries and λ values");
  }
}

}  // namespace

std::vector<double> predict_landmarks(std::span<const double> x, const Matrix& weights,
                                      std::size_t landmark_count) {
  check_head(x, weights, landmark_count);
  std::vector<double> o(landmark_count);
  for (std::size_t m = 0; m < landmark_count; ++m) o[m] = column_dot(x, weights, m);
  return o;
}

std::vector<double> predict_attributes(std::span<const double> x, const Matrix& weights,
                                       std::size_t landmark_count) {
  check_head(x, weights, landmark_count);
  std::vector<double> p(weights.cols() - landmark_count);
  for (std::size_t t = 0; t < p.size(); ++t) p[t] = sigmoid(column_dot(x, weights, landmark_count + t));
  return p;
}

HeadLoss head_loss(std::span<const double> x, const Matrix& weights, std::size_t M,
                   const HeadTargets& targets, std::span<const double> lambda) {
  check_head(x, weights, M);
  check_targets(weights, M, targets, lambda);
  const std::size_t T = weights.cols() - M;
  HeadLoss loss;
  loss.attribute_ce.assign(T, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    const double r = targets.landmarks[m] - column_dot(x, weights, m);
    loss.landmark += r * r;
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (targets.mask[t] == 0.0) continue;
    const double ce = cross_entropy_logit(column_dot(x, weights, M + t), targets.attributes[t]);
    loss.attribute_ce[t] = ce;
    loss.weighted_ce += lambda[t] * ce;
  }
  return loss;
}

HeadGradients head_gradients(std::span<const double> x, const Matrix& weights, std::size_t M,
                             const HeadTargets& targets, std::span<const double> lambda) {
  check_head(x, weights, M);
  check_targets(weights, M, targets, lambda);
  const std::size_t D = weights.rows(), T = weights.cols() - M;
  HeadGradients g{Matrix(D, M + T), std::vector<double>(D, 0.0), HeadLoss{}};
  g.loss.attribute_ce.assign(T, 0.0);

  // Per-column output error: dE/d(logit or prediction).
  std::vector<double> err(M + T, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    const double o = column_dot(x, weights, m);
    const double r = o - targets.landmarks[m];
    g.loss.landmark += r * r;
    err[m] = 2.0 * r;
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (targets.mask[t] == 0.0) continue;
    const double z = column_dot(x, weights, M + t);
    const double ce = cross_entropy_logit(z, targets.attributes[t]);
    g.loss.attribute_ce[t] = ce;
    g.loss.weighted_ce += lambda[t] * ce;
    err[M + t] = lambda[t] * (sigmoid(z) - targets.attributes[t]);
  }
  for (std::size_t d = 0; d < D; ++d) {
    double gx = 0.0;
    for (std::size_t c = 0; c < M + T; ++c) {
      g.weights(d, c) = x[d] * err[c];
      gx += weights(d, c) * err[c];
    }
    g.feature[d] = gx;
  }
  return g;
}

}  // namespace tcmt
