#pragma once

#include <span>
#include <vector>

#include "tcmt/dataset.hpp"
#include "tcmt/model.hpp"

namespace tcmt {

/// Non-owning view of one training example; the referenced storage must outlive it.
struct Example {
  const Tensor* image = nullptr;
  std::span<const double> landmarks;
  std::span<const double> attributes;
  std::span<const double> mask;
};

std::vector<Example> examples_of(const Dataset& dataset);

/// Terms of the training objective. Data terms are sums over the evaluated samples.
struct LossBreakdown {
  double landmark_sq_loss = 0.0;
  std::vector<double> attribute_ce;         // per task, unweighted, summed over labelled samples
  std::vector<std::size_t> labelled;        // per task, number of labelled samples
  double attribute_ce_weighted = 0.0;       // Σ_t λ_t Σ_i CE
  double covariance_penalty = 0.0;          // tr(W Υ⁻¹ Wᵀ)
  double filter_decay = 0.0;                // tr(K Kᵀ)
  double total = 0.0;
  std::size_t samples = 0;

  /// Mean CE of task t over its labelled samples (0 when none).
  double mean_ce(std::size_t t) const;
};

/// tr(W Υ⁻¹ Wᵀ) by Cholesky solve. Throws NumericError if Υ is not positive definite.
double covariance_penalty(const Matrix& weights, const Matrix& covariance);

/// Υ + kCovarianceRidge·I, the matrix every solve in training uses.
Matrix regularized_covariance(const Matrix& covariance);

/// d tr(W Υ⁻¹ Wᵀ)/dW = 2 W Υ⁻¹, with the ridge applied to Υ.
Matrix covariance_gradient(const Matrix& weights, const Matrix& covariance);

/**
 *   E = Σ_i ||y_i − W_Mᵀ x_i||² + Σ_i Σ_t λ_t mask_it CE_it + tr(W Υ⁻¹ Wᵀ) + tr(K Kᵀ)
 *
 * evaluated exactly over `batch` (sums, not means), with Υ regularized as above.
 * Throws NumericError naming the first non-finite term.
 */
LossBreakdown compute_loss(std::span<const Example> batch, const ModelState& state);

/// Same, from precomputed features x_i (one per example).
LossBreakdown compute_loss_from_features(std::span<const std::vector<double>> features,
                                         std::span<const Example> batch, const ModelState& state);

/// Features x_i for every example. Batch items run in parallel.
std::vector<std::vector<double>> compute_features(std::span<const Example> batch, const ModelState& state);

/// Gradient of the data terms only, summed over the batch, plus the data-term losses.
struct DataGradient {
  FilterBank filters;
  Matrix weights;
  LossBreakdown loss;  // data terms; penalties left at 0
};

/// Per-sample work runs in parallel; the reduction adds samples in batch order.
DataGradient data_gradient(std::span<const Example> batch, const ModelState& state);

/// dE/dK and dE/dW of the full objective above.
struct ObjectiveGradient {
  FilterBank filters;
  Matrix weights;
};

ObjectiveGradient objective_gradient(std::span<const Example> batch, const ModelState& state);

}  // namespace tcmt
