#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tcmt/checkpoint.hpp"
#include "tcmt/dataset.hpp"
#include "tcmt/metrics.hpp"
#include "tcmt/model.hpp"
#include "tcmt/objective.hpp"

namespace tcmt {

enum class TrainMode {
  kJoint,           // landmarks + every attribute
  kFldOnly,         // landmarks only
  kFldPlusGroup,    // landmarks + the attributes of one group
  kFldPlusRandom,   // landmarks + one fair-coin task
  kEarlyStopping,   // all attributes at λ = 1, each dropped for good once its validation loss stalls
};

std::string mode_name(TrainMode mode);
TrainMode parse_mode(const std::string& text);

/// How the W decay term is applied inside one SGD step.
enum class DecayStep {
  kImplicit,  // W ← W' Υ (Υ + 2η₂I)⁻¹ after the gradient step; stable for any PSD Υ
  kExplicit,  // W ← W' − 2η₂ W Υ⁻¹ with the pre-step W
};

struct TrainConfig {
  double eta1 = 0.01;               // step on the data gradient (batch mean)
  double eta2 = 1e-4;               // step on the decay terms 2WΥ⁻¹ and 2K
  std::size_t batch = 32;
  std::size_t epochs = 10;
  std::size_t cov_update_every = 1;  // epochs between Υ updates; 0 = never
  double epsilon = 0.01;             // λ floor
  double rho = 1.0;                  // μ scale
  std::size_t tau = 3;               // strip length, in strip samples
  std::size_t strip_every = 1;       // epochs between strip samples (and λ updates)
  std::size_t log_every = 0;         // iterations between log rows; 0 = once per epoch
  double validation_fraction = 0.1;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::kJoint;
  std::string group;                 // for kFldPlusGroup
  bool fixed_lambda = false;         // never update Λ
  double eta1_decay = 0.0;           // η₁ / (1 + decay·epoch)
  double divergence_factor = 10.0;
  InitScale head_init = InitScale::kFanIn;
  double head_init_gain = 1.0;
  double early_stop_threshold = 0.0;
  bool learn_covariance = true;
  bool audit = false;                // record the objective around every Υ and Λ update
  DecayStep decay_step = DecayStep::kImplicit;

  void validate() const;
  std::string to_text() const;
  /// Applies one key=value pair; returns false if the key is not a training key.
  bool apply(const std::string& key, const std::string& value);
};

struct LogRow {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  double eta1 = 0.0;
  double train_landmark = 0.0;        // per-sample mean over the rows' interval
  std::vector<double> train_ce;       // per task, mean over labelled samples in the interval
  double val_landmark = 0.0;          // latest validation evaluation
  std::vector<double> val_ce;
  double val_mean_error = 0.0;
  double covariance_penalty = 0.0;
  double filter_decay = 0.0;
  std::vector<double> lambda;
};

struct TrainingLog {
  std::vector<std::string> attribute_names;  // active attribute tasks; empty for landmark-only runs
  std::vector<LogRow> rows;

  /// Fixed header; attribute columns appear only when attribute tasks are active.
  std::string to_csv() const;
};

/// Objective around one closed-form update, on the full training split.
struct AlternationCheck {
  std::size_t iteration = 0;
  int step = 0;                 // 2 = Υ, 3 = Λ
  double before = 0.0;          // training objective, literal
  double after = 0.0;
  double with_prior_before = 0.0;  // step 3 only: objective plus Σ_t (N_t/2)(λ_t − μ_t)²
  double with_prior_after = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainingLog log;
  std::vector<AlternationCheck> audits;
  /// Dataset attribute index of each active attribute task (random task: SIZE_MAX).
  std::vector<std::size_t> active_attributes;
};

/**
 * One SGD step on K and W with Υ and Λ fixed:
 *   W ← W − η₁ mean_i ∂E_i/∂W − η₂ 2WΥ⁻¹,   K ← K − η₁ mean_i ∂E_i/∂K − η₂ 2K.
 * With DecayStep::kImplicit the W decay is taken as the proximal step
 * W ← (W − η₁ mean_i ∂E_i/∂W) Υ (Υ + 2η₂I)⁻¹, which agrees with the explicit
 * form to first order in η₂ and cannot overshoot when Υ has tiny eigenvalues.
 * Returns the batch's data-term losses (sums) before the step. Throws
 * NumericError naming the term and task when a gradient is not finite.
 */
LossBreakdown sgd_step(ModelState& state, std::span<const Example> batch, double eta1, double eta2,
                       DecayStep decay = DecayStep::kImplicit);

/// Fresh state: filters from the seed, W ~ N(0,1)·scale, Υ = I/(M+T), Λ = 1, zero landmark offset.
/// train() replaces the offset with the training split's mean shape.
ModelState initial_state(const NetConfig& net, const TaskLayout& layout, const TrainConfig& config);

/// Trains on an existing split.
TrainResult train(const Dataset& train_set, const Dataset& validation_set, const TrainConfig& config,
                  const NetConfig& net);
/// Splits `dataset` with config.validation_fraction and config.seed, then trains.
TrainResult train(const Dataset& dataset, const TrainConfig& config, const NetConfig& net);

/**
 * Landmark-only training of a new layout starting from a pre-trained filter
 * bank. The head is rebuilt for the dataset's M', Υ is fixed at I/M' and
 * there are no attribute tasks.
 */
TrainResult fine_tune(const Checkpoint& pretrained, const Dataset& train_set, const Dataset& validation_set,
                      const TrainConfig& config);

/// Same procedure with freshly initialized filters, for comparison with fine_tune.
TrainResult train_from_scratch(const NetConfig& net, const Dataset& train_set, const Dataset& validation_set,
                               const TrainConfig& config);

/// Landmark predictions in image coordinates (offset added back).
std::vector<std::vector<double>> predict_landmarks(const ModelState& state, std::span<const Example> batch);

/// Per-coordinate mean of the dataset's landmark targets.
std::vector<double> mean_shape(const Dataset& dataset);

/// Landmark metrics of `state` on `dataset`, using the state's eye indices.
MetricsReport evaluate(const ModelState& state, const Dataset& dataset);

std::uint64_t config_hash(const TrainConfig& config, const NetConfig& net);

}  // namespace tcmt
