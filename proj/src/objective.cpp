#include "tcmt/objective.hpp"

#include <cmath>
#include <string>

#include "tcmt/task_covariance.hpp"

namespace tcmt {

void ModelState::validate() const {
  net.validate();
  layout.validate();
  filters.check(net);
  const std::size_t D = net.feature_dim, n = layout.task_count();
  if (weights.rows() != D || weights.cols() != n) {
    throw DimensionError("weight matrix is " + std::to_string(weights.rows()) + "x" + std::to_string(weights.cols()) +
                         ", expected " + std::to_string(D) + "x" + std::to_string(n));
  }
  if (covariance.rows() != n || covariance.cols() != n) {
    throw DimensionError("task covariance must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (coefficients.lambda.size() != layout.attribute_count() || coefficients.mu.size() != layout.attribute_count()) {
    throw DimensionError("coefficient state must hold one λ and μ per attribute");
  }
  if (landmark_offset.size() != layout.landmark_count) {
    throw DimensionError("landmark offset must hold " + std::to_string(layout.landmark_count) + " values");
  }
}

std::vector<Example> examples_of(const Dataset& dataset) {
  std::vector<Example> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset.samples) out.push_back({&s.image, s.landmarks, s.attributes, s.mask});
  return out;
}

double LossBreakdown::mean_ce(std::size_t t) const {
  return labelled.at(t) == 0 ? 0.0 : attribute_ce.at(t) / static_cast<double>(labelled[t]);
}

double covariance_penalty(const Matrix& weights, const Matrix& covariance) {
  if (covariance.rows() != weights.cols() || covariance.cols() != weights.cols()) {
    throw DimensionError("covariance_penalty: Υ must be " + std::to_string(weights.cols()) + " square");
  }
  // tr(W Υ⁻¹ Wᵀ) = Σ_ij (Wᵀ)_ij (Υ⁻¹Wᵀ)_ij
  const Matrix wt = weights.transpose();
  const Matrix solved = spd_solve(covariance, wt);
  double s = 0.0;
  for (std::size_t i = 0; i < wt.size(); ++i) s += wt.values()[i] * solved.values()[i];
  return s;
}

Matrix regularized_covariance(const Matrix& covariance) { return add_ridge(covariance, kCovarianceRidge); }

Matrix covariance_gradient(const Matrix& weights, const Matrix& covariance) {
  Matrix g = spd_solve(regularized_covariance(covariance), weights.transpose()).transpose();
  g *= 2.0;
  return g;
}

namespace {

HeadTargets targets_of(const Example& e) { return {e.landmarks, e.attributes, e.mask}; }

void check_batch(std::span<const Example> batch, const ModelState& state) {
  const std::size_t M = state.layout.landmark_count, T = state.layout.attribute_count();
  if (state.coefficients.lambda.size() != T) throw DimensionError("λ must have one entry per attribute");
  for (const auto& e : batch) {
    if (!e.image) throw DimensionError("example without image");
    if (e.landmarks.size() != M || e.attributes.size() != T || e.mask.size() != T) {
      throw DimensionError("example targets do not match the task layout (M=" + std::to_string(M) +
                           ", T=" + std::to_string(T) + ")");
    }
  }
}

void add_sample(LossBreakdown& total, const HeadLoss& l, std::span<const double> mask) {
  total.landmark_sq_loss += l.landmark;
  for (std::size_t t = 0; t < l.attribute_ce.size(); ++t) {
    total.attribute_ce[t] += l.attribute_ce[t];
    if (mask[t] != 0.0) ++total.labelled[t];
  }
  total.attribute_ce_weighted += l.weighted_ce;
  ++total.samples;
}

LossBreakdown empty_breakdown(std::size_t T) {
  LossBreakdown b;
  b.attribute_ce.assign(T, 0.0);
  b.labelled.assign(T, 0);
  return b;
}

void require_finite_term(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericError(std::string("objective: ") + term + " is not finite");
}

void finish(LossBreakdown& b, const ModelState& state) {
  require_finite_term(b.landmark_sq_loss, "landmark squared loss");
  for (std::size_t t = 0; t < b.attribute_ce.size(); ++t) {
    if (!std::isfinite(b.attribute_ce[t])) {
      throw NumericError("objective: cross-entropy of attribute " + std::to_string(t) + " (" +
                         state.layout.attribute_names[t] + ") is not finite");
    }
  }
  require_finite_term(b.attribute_ce_weighted, "weighted cross-entropy");
  b.covariance_penalty = covariance_penalty(state.weights, regularized_covariance(state.covariance));
  require_finite_term(b.covariance_penalty, "covariance penalty");
  b.filter_decay = state.filters.decay_norm();
  require_finite_term(b.filter_decay, "filter decay");
  b.total = b.landmark_sq_loss + b.attribute_ce_weighted + b.covariance_penalty + b.filter_decay;
}

}  // namespace

std::vector<std::vector<double>> compute_features(std::span<const Example> batch, const ModelState& state) {
  std::vector<std::vector<double>> out(batch.size());
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const Tensor x = net_forward(state.net, state.filters, *batch[static_cast<std::size_t>(i)].image);
      out[static_cast<std::size_t>(i)].assign(x.data(), x.data() + x.size());
    } catch (...) {
#pragma omp critical(tcmt_objective_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

LossBreakdown compute_loss_from_features(std::span<const std::vector<double>> features,
                                         std::span<const Example> batch, const ModelState& state) {
  check_batch(batch, state);
  if (features.size() != batch.size()) throw DimensionError("compute_loss: one feature vector per example");
  const std::size_t M = state.layout.landmark_count;
  LossBreakdown b = empty_breakdown(state.layout.attribute_count());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const HeadLoss l = head_loss(features[i], state.weights, M, targets_of(batch[i]), state.coefficients.lambda);
    add_sample(b, l, batch[i].mask);
  }
  finish(b, state);
  return b;
}

LossBreakdown compute_loss(std::span<const Example> batch, const ModelState& state) {
  check_batch(batch, state);
  const auto features = compute_features(batch, state);
  return compute_loss_from_features(features, batch, state);
}

DataGradient data_gradient(std::span<const Example> batch, const ModelState& state) {
  check_batch(batch, state);
  const std::size_t M = state.layout.landmark_count, T = state.layout.attribute_count();
  const std::size_t n = batch.size();
  std::vector<FilterBank> filter_grads(n);
  std::vector<HeadGradients> head_grads(n);
  std::exception_ptr error;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      ActivationCache cache;
      const Tensor x = net_forward(state.net, state.filters, *batch[i].image, cache);
      head_grads[i] = head_gradients(x.values(), state.weights, M, targets_of(batch[i]), state.coefficients.lambda);
      Tensor gx({head_grads[i].feature.size()});
      std::copy(head_grads[i].feature.begin(), head_grads[i].feature.end(), gx.data());
      filter_grads[i] = net_backward(state.net, state.filters, cache, gx);
    } catch (...) {
#pragma omp critical(tcmt_objective_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  DataGradient g{FilterBank::zeros(state.net), Matrix(state.weights.rows(), state.weights.cols()),
                 empty_breakdown(T)};
  for (std::size_t i = 0; i < n; ++i) {
    g.filters.add_scaled(filter_grads[i], 1.0);
    g.weights += head_grads[i].weights;
    add_sample(g.loss, head_grads[i].loss, batch[i].mask);
  }
  g.loss.total = g.loss.landmark_sq_loss + g.loss.attribute_ce_weighted;
  return g;
}

ObjectiveGradient objective_gradient(std::span<const Example> batch, const ModelState& state) {
  DataGradient g = data_gradient(batch, state);
  g.filters.add_decay_gradient(state.filters, 2.0);
  g.weights += covariance_gradient(state.weights, state.covariance);
  return {std::move(g.filters), std::move(g.weights)};
}

}  // namespace tcmt
