#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace tcmt {

/**
 * Per-task history of training and validation losses, sampled at fixed
 * iteration spacing. Holds at most `capacity` samples; older ones are evicted
 * from the front so the retained window is always contiguous.
 */
class ErrorStrip {
 public:
  struct Entry {
    std::size_t iteration = 0;
    std::vector<double> train;       // per task
    std::vector<double> validation;  // per task
  };

  ErrorStrip(std::size_t task_count, std::size_t capacity);

  /// Appends one sample. Losses must be non-negative and have task_count entries.
  void record(std::size_t iteration, std::span<const double> train_losses,
              std::span<const double> validation_losses);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t task_count() const { return task_count_; }
  const Entry& back(std::size_t offset = 0) const;  // offset 0 = newest
  const std::deque<Entry>& entries() const { return entries_; }

 private:
  std::size_t task_count_;
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

/**
 * Trend coefficient for task t from the strip endpoints j (newest) and j−τ:
 *
 *   μ_t = ρ · (E_val(j−τ) − E_val(j)) / E_val(j−τ) · (E_tr(j−τ) − E_tr(j)) / E_tr(j−τ)
 *
 * Returns nullopt ("warmup") when fewer than τ+1 samples are held or either
 * denominator is zero.
 */
std::optional<double> compute_mu(const ErrorStrip& strip, std::size_t task, double rho, std::size_t tau);

struct CoefficientState {
  std::vector<double> lambda;  // in [floor, 1]
  std::vector<double> mu;
  double floor = 0.01;  // ε
  double scale = 1.0;   // ρ

  static CoefficientState initial(std::size_t task_count, double floor, double scale);

  bool operator==(const CoefficientState&) const = default;
};

/**
 * Closed-form minimizer of  λ·CE_t + ½(λ − μ_t)²  over ε ≤ λ ≤ 1:
 *
 *   λ_t = min(1, max(ε, μ_t − CE_t))
 *
 * CE_t is the mean cross-entropy, i.e. the negated mean log-likelihood, so this
 * is the same expression as μ_t + (1/N) Σ [l ln f + (1−l) ln(1−f)]. Tasks whose
 * μ is absent (warmup) keep their previous λ.
 */
CoefficientState update_lambda(const CoefficientState& state, std::span<const std::optional<double>> mu,
                               std::span<const double> mean_cross_entropy);

}  // namespace tcmt
