#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tcmt/linalg.hpp"

namespace tcmt {

/**
 * Task layout of the output layer: M landmark coordinates followed by T
 * binary attributes. Coordinates are interleaved (x1, y1, x2, y2, ...), so
 * column 2p is point p's x and column 2p+1 its y.
 */
struct TaskLayout {
  std::size_t landmark_count = 10;  // M, twice the number of points
  std::vector<std::string> attribute_names;
  std::vector<std::string> attribute_groups;  // one label per attribute
  std::size_t left_eye = 0;                   // point indices for the inter-ocular distance
  std::size_t right_eye = 1;

  std::size_t point_count() const { return landmark_count / 2; }
  std::size_t attribute_count() const { return attribute_names.size(); }
  std::size_t task_count() const { return landmark_count + attribute_count(); }

  void validate() const;
  /// Distinct group labels in first-appearance order.
  std::vector<std::string> groups() const;
  std::vector<std::size_t> attributes_in_group(const std::string& group) const;

  /// Layout restricted to the given attribute indices (order preserved).
  TaskLayout with_attributes(const std::vector<std::size_t>& keep) const;

  /// "name:group;name:group" list used in manifest headers and checkpoints.
  std::string attribute_list() const;
  static void parse_attribute_list(const std::string& text, TaskLayout& layout);

  bool operator==(const TaskLayout&) const = default;
};

/// Numerically stable logistic function.
double sigmoid(double z);
/// ln f(z) without overflow for large |z|.
double log_sigmoid(double z);

/// Cross-entropy floor: probabilities are clamped at this value when reporting losses.
inline constexpr double kProbabilityFloor = 1e-12;

/// −[l ln f(z) + (1−l) ln(1−f(z))], capped at −ln(kProbabilityFloor).
double cross_entropy_logit(double z, double label);

/// o = W_Mᵀ x (first `landmark_count` columns of W).
std::vector<double> predict_landmarks(std::span<const double> x, const Matrix& weights,
                                      std::size_t landmark_count);
/// f(W_Tᵀ x) for the remaining columns.
std::vector<double> predict_attributes(std::span<const double> x, const Matrix& weights,
                                       std::size_t landmark_count);

struct HeadTargets {
  std::span<const double> landmarks;   // M
  std::span<const double> attributes;  // T, each 0 or 1
  std::span<const double> mask;        // T, 1 = labelled
};

struct HeadLoss {
  double landmark = 0.0;                 // ||y − W_Mᵀx||²
  std::vector<double> attribute_ce;      // per task, unweighted, 0 where masked
  double weighted_ce = 0.0;              // Σ λ_t mask_t CE_t
};

/**
 * Gradients of one sample's data loss
 *   ||y − W_Mᵀx||² + Σ_t λ_t mask_t CE_t(W_Tᵀx)
 * as descent directions (dE/dW, dE/dx). Column m < M is 2x(o_m − y_m);
 * column M+t is λ_t mask_t x (f_t − l_t). This is the negated form of the
 * usual residual expressions x(y − o)ᵀ, with the factor 2 of the squared loss kept.
 */
struct HeadGradients {
  Matrix weights;               // D x (M+T)
  std::vector<double> feature;  // D
  HeadLoss loss;
};

HeadLoss head_loss(std::span<const double> x, const Matrix& weights, std::size_t landmark_count,
                   const HeadTargets& targets, std::span<const double> lambda);

HeadGradients head_gradients(std::span<const double> x, const Matrix& weights,
                             std::size_t landmark_count, const HeadTargets& targets,
                             std::span<const double> lambda);

}  // namespace tcmt
