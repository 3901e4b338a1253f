#pragma once

#include <vector>

#include "tcmt/dynamic_coefficients.hpp"
#include "tcmt/feature_net.hpp"
#include "tcmt/linalg.hpp"
#include "tcmt/multitask_head.hpp"

namespace tcmt {

/// Everything estimated jointly: filters K, head W, task covariance Υ and the coefficients Λ.
struct ModelState {
  NetConfig net;
  TaskLayout layout;
  FilterBank filters;
  Matrix weights;     // D x (M+T), landmark columns first
  Matrix covariance;  // (M+T) x (M+T)
  CoefficientState coefficients;
  /// Mean training shape. The head regresses y − offset; predictions add it back.
  std::vector<double> landmark_offset;

  std::size_t feature_dim() const { return net.feature_dim; }
  std::size_t task_count() const { return layout.task_count(); }

  /// Throws DimensionError unless all parts agree with `net` and `layout`.
  void validate() const;

  bool operator==(const ModelState&) const = default;
};

}  // namespace tcmt
