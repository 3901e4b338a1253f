#include "tcmt/dynamic_coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tcmt/tensor.hpp"

namespace tcmt {

ErrorStrip::ErrorStrip(std::size_t task_count, std::size_t capacity)
    : task_count_(task_count), capacity_(capacity) {
  if (capacity_ < 2) throw DimensionError("error strip capacity must be at least 2");
}

void ErrorStrip::record(std::size_t iteration, std::span<const double> train_losses,
                        std::span<const double> validation_losses) {
  if (train_losses.size() != task_count_ || validation_losses.size() != task_count_) {
    throw DimensionError("error strip expects " + std::to_string(task_count_) + " losses per split");
  }
  for (std::size_t t = 0; t < task_count_; ++t) {
    if (!(train_losses[t] >= 0.0) || !(validation_losses[t] >= 0.0) || !std::isfinite(train_losses[t]) ||
        !std::isfinite(validation_losses[t])) {
      throw NumericError("error strip: loss for task " + std::to_string(t) + " is negative or non-finite");
    }
  }
  if (!entries_.empty() && iteration <= entries_.back().iteration) {
    throw DimensionError("error strip samples must be recorded in increasing iteration order");
  }
  entries_.push_back({iteration, {train_losses.begin(), train_losses.end()},
                      {validation_losses.begin(), validation_losses.end()}});
  while (entries_.size() > capacity_) entries_.pop_front();
}

const ErrorStrip::Entry& ErrorStrip::back(std::size_t offset) const {
  if (offset >= entries_.size()) throw DimensionError("error strip offset out of range");
  return entries_[entries_.size() - 1 - offset];
}

std::optional<double> compute_mu(const ErrorStrip& strip, std::size_t task, double rho, std::size_t tau) {
  if (task >= strip.task_count()) throw DimensionError("compute_mu: task index out of range");
  if (tau == 0 || strip.size() < tau + 1) return std::nullopt;
  const auto& now = strip.back(0);
  const auto& then = strip.back(tau);
  const double v0 = then.validation[task], v1 = now.validation[task];
  const double t0 = then.train[task], t1 = now.train[task];
  if (v0 == 0.0 || t0 == 0.0) return std::nullopt;
  return rho * ((v0 - v1) / v0) * ((t0 - t1) / t0);
}

CoefficientState CoefficientState::initial(std::size_t task_count, double floor, double scale) {
  if (!(floor > 0.0) || floor > 1.0) throw DimensionError("coefficient floor must be in (0, 1]");
  return {std::vector<double>(task_count, 1.0), std::vector<double>(task_count, 0.0), floor, scale};
}

CoefficientState update_lambda(const CoefficientState& state, std::span<const std::optional<double>> mu,
                               std::span<const double> mean_cross_entropy) {
  const std::size_t T = state.lambda.size();
  if (mu.size() != T || mean_cross_entropy.size() != T) {
    throw DimensionError("update_lambda expects " + std::to_string(T) + " μ and CE values");
  }
  CoefficientState next = state;
  for (std::size_t t = 0; t < T; ++t) {
    if (!mu[t]) continue;
    next.mu[t] = *mu[t];
    next.lambda[t] = std::min(1.0, std::max(state.floor, *mu[t] - mean_cross_entropy[t]));
  }
  return next;
}

}  // namespace tcmt
