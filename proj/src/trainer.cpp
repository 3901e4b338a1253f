#include "tcmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tcmt/kv_text.hpp"
#include "tcmt/task_covariance.hpp"

namespace tcmt {

namespace {

constexpr std::size_t kRandomTask = std::numeric_limits<std::size_t>::max();

// Independent RNG streams derived from one seed (splitmix64 finalizer).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum Stream : std::uint64_t {
  kFilterStream = 1,
  kLandmarkHeadStream = 2,
  kShuffleStream = 3,
  kRandomLabelStream = 4,
  kAttributeHeadStream = 1000,  // + dataset attribute index
};

}  // namespace

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kJoint: return "joint";
    case TrainMode::kFldOnly: return "fld_only";
    case TrainMode::kFldPlusGroup: return "fld_plus_group";
    case TrainMode::kFldPlusRandom: return "fld_plus_random";
    case TrainMode::kEarlyStopping: return "baseline_early_stopping";
  }
  return "?";
}

TrainMode parse_mode(const std::string& text) {
  for (auto m : {TrainMode::kJoint, TrainMode::kFldOnly, TrainMode::kFldPlusGroup, TrainMode::kFldPlusRandom,
                 TrainMode::kEarlyStopping}) {
    if (text == mode_name(m)) return m;
  }
  throw ConfigError("unknown mode '" + text +
                    "' (expected joint, fld_only, fld_plus_group, fld_plus_random or baseline_early_stopping)");
}

void TrainConfig::validate() const {
  if (!(eta1 > 0.0) || !(eta2 > 0.0)) throw ConfigError("eta1 and eta2 must be positive");
  if (batch == 0) throw ConfigError("batch must be at least 1");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must be in (0, 1]");
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw ConfigError("rho must be a non-negative number");
  if (tau == 0) throw ConfigError("tau must be at least 1");
  if (strip_every == 0) throw ConfigError("strip_every must be at least 1");
  if (!(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw ConfigError("validation_fraction must be in (0, 0.5]");
  }
  if (mode == TrainMode::kFldPlusGroup && group.empty()) throw ConfigError("mode fld_plus_group needs a group");
  if (!(eta1_decay >= 0.0)) throw ConfigError("eta1_decay must be non-negative");
  if (!(divergence_factor > 1.0)) throw ConfigError("divergence_factor must exceed 1");
  if (!(head_init_gain > 0.0)) throw ConfigError("head_init_gain must be positive");
}

std::string TrainConfig::to_text() const {
  KeyValues kv;
  kv.set("eta1", format_double(eta1));
  kv.set("eta2", format_double(eta2));
  kv.set("batch", std::to_string(batch));
  kv.set("epochs", std::to_string(epochs));
  kv.set("cov_update_every", std::to_string(cov_update_every));
  kv.set("epsilon", format_double(epsilon));
  kv.set("rho", format_double(rho));
  kv.set("tau", std::to_string(tau));
  kv.set("strip_every", std::to_string(strip_every));
  kv.set("log_every", std::to_string(log_every));
  kv.set("validation_fraction", format_double(validation_fraction));
  kv.set("seed", std::to_string(seed));
  kv.set("mode", mode_name(mode));
  kv.set("group", group);
  kv.set("fixed_lambda", fixed_lambda ? "true" : "false");
  kv.set("eta1_decay", format_double(eta1_decay));
  kv.set("divergence_factor", format_double(divergence_factor));
  kv.set("head_init", head_init == InitScale::kFanIn ? "fan_in" : "standard_normal");
  kv.set("head_init_gain", format_double(head_init_gain));
  kv.set("early_stop_threshold", format_double(early_stop_threshold));
  kv.set("learn_covariance", learn_covariance ? "true" : "false");
  kv.set("audit", audit ? "true" : "false");
  kv.set("decay_step", decay_step == DecayStep::kImplicit ? "implicit" : "explicit");
  return kv.to_text();
}

bool TrainConfig::apply(const std::string& key, const std::string& value) {
  if (key == "eta1") eta1 = parse_double(value, key);
  else if (key == "eta2") eta2 = parse_double(value, key);
  else if (key == "batch") batch = parse_size(value, key);
  else if (key == "epochs") epochs = parse_size(value, key);
  else if (key == "cov_update_every") cov_update_every = parse_size(value, key);
  else if (key == "epsilon") epsilon = parse_double(value, key);
  else if (key == "rho") rho = parse_double(value, key);
  else if (key == "tau") tau = parse_size(value, key);
  else if (key == "strip_every") strip_every = parse_size(value, key);
  else if (key == "log_every") log_every = parse_size(value, key);
  else if (key == "validation_fraction") validation_fraction = parse_double(value, key);
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_size(value, key));
  else if (key == "mode") {
    const auto colon = value.find(':');
    mode = parse_mode(trim(value.substr(0, colon)));
    if (colon != std::string::npos) group = trim(value.substr(colon + 1));
  } else if (key == "group") group = value;
  else if (key == "fixed_lambda") fixed_lambda = parse_bool(value, key);
  else if (key == "eta1_decay") eta1_decay = parse_double(value, key);
  else if (key == "divergence_factor") divergence_factor = parse_double(value, key);
  else if (key == "head_init") {
    if (value == "fan_in") head_init = InitScale::kFanIn;
    else if (value == "standard_normal") head_init = InitScale::kStandardNormal;
    else throw ConfigError("head_init must be fan_in or standard_normal");
  } else if (key == "head_init_gain") head_init_gain = parse_double(value, key);
  else if (key == "early_stop_threshold") early_stop_threshold = parse_double(value, key);
  else if (key == "learn_covariance") learn_covariance = parse_bool(value, key);
  else if (key == "audit") audit = parse_bool(value, key);
  else if (key == "decay_step") {
    if (value == "implicit") decay_step = DecayStep::kImplicit;
    else if (value == "explicit") decay_step = DecayStep::kExplicit;
    else throw ConfigError("decay_step must be implicit or explicit");
  }
  else return false;
  return true;
}

std::uint64_t config_hash(const TrainConfig& config, const NetConfig& net) {
  return fnv1a64(config.to_text() + "\n" + net.to_text());
}

std::string TrainingLog::to_csv() const {
  std::string s = "iteration,epoch,eta1,train_landmark_loss,val_landmark_loss,val_mean_error,covariance_penalty,"
                  "filter_decay";
  for (const auto& n : attribute_names) s += ",train_ce_" + n;
  for (const auto& n : attribute_names) s += ",val_ce_" + n;
  for (const auto& n : attribute_names) s += ",lambda_" + n;
  s += '\n';
  for (const auto& r : rows) {
    s += std::to_string(r.iteration) + "," + std::to_string(r.epoch) + "," + format_double(r.eta1) + "," +
         format_double(r.train_landmark) + "," + format_double(r.val_landmark) + "," +
         format_double(r.val_mean_error) + "," + format_double(r.covariance_penalty) + "," +
         format_double(r.filter_decay);
    for (double v : r.train_ce) s += "," + format_double(v);
    for (double v : r.val_ce) s += "," + format_double(v);
    for (double v : r.lambda) s += "," + format_double(v);
    s += '\n';
  }
  return s;
}

// ---- SGD ----

LossBreakdown sgd_step(ModelState& state, std::span<const Example> batch, double eta1, double eta2,
                       DecayStep decay) {
  if (batch.empty()) throw DimensionError("sgd_step: empty batch");
  DataGradient g = data_gradient(batch, state);
  const std::size_t M = state.layout.landmark_count;
  for (std::size_t c = 0; c < g.weights.cols(); ++c) {
    for (std::size_t d = 0; d < g.weights.rows(); ++d) {
      if (std::isfinite(g.weights(d, c))) continue;
      if (c < M) throw NumericError("sgd_step: non-finite landmark gradient for coordinate " + std::to_string(c));
      throw NumericError("sgd_step: non-finite cross-entropy gradient for attribute task " + std::to_string(c - M) +
                         " (" + state.layout.attribute_names[c - M] + ")");
    }
  }
  if (!g.filters.all_finite()) throw NumericError("sgd_step: non-finite filter gradient from backpropagation");

  const double step = eta1 / static_cast<double>(batch.size());
  if (decay == DecayStep::kExplicit) {
    const Matrix decay_w = covariance_gradient(state.weights, state.covariance);
    if (!decay_w.all_finite()) throw NumericError("sgd_step: non-finite covariance decay term 2WΥ⁻¹");
    for (std::size_t i = 0; i < state.weights.size(); ++i) {
      state.weights.values()[i] -= step * g.weights.values()[i] + eta2 * decay_w.values()[i];
    }
  } else {
    for (std::size_t i = 0; i < state.weights.size(); ++i) state.weights.values()[i] -= step * g.weights.values()[i];
    if (eta2 > 0.0) {
      // W ← W Υ (Υ + 2η₂I)⁻¹, the minimizer of ½||W − W'||² + η₂ tr(W Υ⁻¹ Wᵀ).
      const Matrix shifted = add_ridge(state.covariance, 2.0 * eta2);
      state.weights = spd_solve(shifted, state.covariance * state.weights.transpose()).transpose();
      if (!state.weights.all_finite()) throw NumericError("sgd_step: covariance decay produced non-finite weights");
    }
  }
  // K ← K − η₁·grad − η₂·2K; the decay applies to kernels and fc weights only.
  state.filters.add_decay_gradient(state.filters, -2.0 * eta2);
  state.filters.add_scaled(g.filters, -step);
  return g.loss;
}

// ---- initialization ----

namespace {

Matrix init_head(std::size_t D, std::size_t M, const std::vector<std::size_t>& attribute_streams,
                 const TrainConfig& config) {
  const std::size_t n = M + attribute_streams.size();
  Matrix w(D, n);
  const double scale =
      config.head_init_gain / (config.head_init == InitScale::kFanIn ? std::sqrt(static_cast<double>(D)) : 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::mt19937_64 rng(stream_seed(config.seed, kLandmarkHeadStream));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t d = 0; d < D; ++d) w(d, m) = scale * normal(rng);
  for (std::size_t t = 0; t < attribute_streams.size(); ++t) {
    std::mt19937_64 r(stream_seed(config.seed, kAttributeHeadStream + attribute_streams[t]));
    std::normal_distribution<double> nt(0.0, 1.0);
    for (std::size_t d = 0; d < D; ++d) w(d, M + t) = scale * nt(r);
  }
  return w;
}

ModelState make_state(const NetConfig& net, const TaskLayout& layout, const TrainConfig& config,
                      const std::vector<std::size_t>& attribute_streams) {
  net.validate();
  layout.validate();
  ModelState s;
  s.net = net;
  s.layout = layout;
  s.filters = init_filters(net, stream_seed(config.seed, kFilterStream));
  s.weights = init_head(net.feature_dim, layout.landmark_count, attribute_streams, config);
  s.covariance = initial_covariance(layout.task_count());
  s.coefficients = CoefficientState::initial(layout.attribute_count(), config.epsilon, config.rho);
  s.landmark_offset.assign(layout.landmark_count, 0.0);
  return s;
}

// Active-task view of one split: attribute columns selected (or synthesized) per mode.
struct TaskData {
  std::vector<std::vector<double>> landmarks;  // centred on the model's offset
  std::vector<std::vector<double>> attributes;
  std::vector<std::vector<double>> masks;
  std::vector<Example> examples;
};

TaskData make_view(const Dataset& d, const std::vector<double>& offset, const std::vector<std::size_t>& active,
                   std::uint64_t random_seed) {
  TaskData v;
  const std::size_t n = d.size();
  v.landmarks.resize(n);
  v.attributes.resize(n);
  v.masks.resize(n);
  std::mt19937_64 coin(random_seed);
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = d.samples[i];
    v.landmarks[i] = s.landmarks;
    for (std::size_t m = 0; m < offset.size(); ++m) v.landmarks[i][m] -= offset[m];
    for (std::size_t a : active) {
      if (a == kRandomTask) {
        v.attributes[i].push_back(static_cast<double>(coin() >> 63));
        v.masks[i].push_back(1.0);
      } else {
        v.attributes[i].push_back(s.attributes.at(a));
        v.masks[i].push_back(s.mask.at(a));
      }
    }
  }
  v.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    v.examples.push_back({&d.samples[i].image, v.landmarks[i], v.attributes[i], v.masks[i]});
  }
  return v;
}

std::vector<std::size_t> active_attributes(const TaskLayout& layout, const TrainConfig& config) {
  std::vector<std::size_t> active;
  switch (config.mode) {
    case TrainMode::kJoint:
    case TrainMode::kEarlyStopping:
      active.resize(layout.attribute_count());
      std::iota(active.begin(), active.end(), std::size_t{0});
      break;
    case TrainMode::kFldOnly:
      break;
    case TrainMode::kFldPlusGroup:
      active = layout.attributes_in_group(config.group);
      if (active.empty()) throw ConfigError("no attributes in group '" + config.group + "'");
      break;
    case TrainMode::kFldPlusRandom:
      active.push_back(kRandomTask);
      break;
  }
  return active;
}

TaskLayout active_layout(const TaskLayout& layout, const std::vector<std::size_t>& active) {
  TaskLayout out = layout.with_attributes({});
  for (std::size_t a : active) {
    out.attribute_names.push_back(a == kRandomTask ? "random" : layout.attribute_names.at(a));
    out.attribute_groups.push_back(a == kRandomTask ? "random" : layout.attribute_groups.at(a));
  }
  return out;
}

std::vector<std::size_t> head_streams(const std::vector<std::size_t>& active) {
  std::vector<std::size_t> s;
  // The random task gets the stream after the last real attribute index a dataset could use.
  for (std::size_t a : active) s.push_back(a == kRandomTask ? 100000 : a);
  return s;
}

struct Evaluation {
  double landmark = 0.0;        // per-sample mean
  std::vector<double> ce;       // per task, mean over labelled
  double mean_error = 0.0;
  LossBreakdown loss;           // sums, with penalties
};

Evaluation evaluate_split(const TaskData& data, const ModelState& state,
                          const std::vector<std::vector<double>>* features = nullptr) {
  Evaluation e;
  const std::size_t T = state.layout.attribute_count();
  e.ce.assign(T, 0.0);
  if (data.examples.empty()) return e;
  std::vector<std::vector<double>> own;
  if (!features) {
    own = compute_features(data.examples, state);
    features = &own;
  }
  e.loss = compute_loss_from_features(*features, data.examples, state);
  const double n = static_cast<double>(data.examples.size());
  e.landmark = e.loss.landmark_sq_loss / n;
  for (std::size_t t = 0; t < T; ++t) e.ce[t] = e.loss.mean_ce(t);
  const std::size_t M = state.layout.landmark_count;
  double err = 0.0;
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    auto pred = predict_landmarks((*features)[i], state.weights, M);
    std::vector<double> truth(data.examples[i].landmarks.begin(), data.examples[i].landmarks.end());
    for (std::size_t m = 0; m < M; ++m) {
      pred[m] += state.landmark_offset[m];
      truth[m] += state.landmark_offset[m];
    }
    err += mean_error(pred, truth, state.layout.left_eye, state.layout.right_eye).mean;
  }
  e.mean_error = err / n;
  return e;
}

double prior_term(const LossBreakdown& loss, const CoefficientState& c, const std::vector<bool>& has_mu) {
  double s = 0.0;
  for (std::size_t t = 0; t < c.lambda.size(); ++t) {
    if (!has_mu[t]) continue;
    const double d = c.lambda[t] - c.mu[t];
    s += 0.5 * static_cast<double>(loss.labelled[t]) * d * d;
  }
  return s;
}

TrainResult run(ModelState state, const TaskData& train_data, const TaskData& val_data, const TrainConfig& config) {
  const std::size_t N = train_data.examples.size();
  if (N == 0) throw DataError("training split is empty");
  const std::size_t T = state.layout.attribute_count();
  const std::size_t B = std::min(config.batch, N);

  TrainResult result;
  result.log.attribute_names = state.layout.attribute_names;
  ErrorStrip strip(std::max<std::size_t>(T, 1), std::max<std::size_t>(config.tau + 1, 2));
  std::vector<bool> halted(T, false);
  std::vector<double> last_train_ce(T, 0.0);

  std::mt19937_64 shuffle_rng(stream_seed(config.seed, kShuffleStream));
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), std::size_t{0});

  Evaluation val = evaluate_split(val_data, state);
  std::size_t iteration = 0;
  double interval_landmark = 0.0;
  std::size_t interval_samples = 0;
  std::vector<double> interval_ce(T, 0.0);
  std::vector<std::size_t> interval_labelled(T, 0);
  double first_landmark = -1.0;
  double eta1 = config.eta1;
  std::size_t epoch = 0;

  auto emit_row = [&]() {
    if (interval_samples == 0) return;
    LogRow r;
    r.iteration = iteration;
    r.epoch = epoch;
    r.eta1 = eta1;
    r.train_landmark = interval_landmark / static_cast<double>(interval_samples);
    for (std::size_t t = 0; t < T; ++t) {
      r.train_ce.push_back(interval_labelled[t] ? interval_ce[t] / static_cast<double>(interval_labelled[t]) : 0.0);
    }
    r.val_landmark = val.landmark;
    r.val_ce = val.ce;
    r.val_mean_error = val.mean_error;
    r.covariance_penalty = covariance_penalty(state.weights, regularized_covariance(state.covariance));
    r.filter_decay = state.filters.decay_norm();
    r.lambda = state.coefficients.lambda;
    result.log.rows.push_back(r);
    interval_landmark = 0.0;
    interval_samples = 0;
    std::fill(interval_ce.begin(), interval_ce.end(), 0.0);
    std::fill(interval_labelled.begin(), interval_labelled.end(), 0);
    if (!std::isfinite(r.train_landmark)) throw NumericError("training diverged: landmark loss is not finite");
    if (first_landmark < 0.0) {
      first_landmark = r.train_landmark;
    } else if (r.train_landmark > config.divergence_factor * first_landmark) {
      throw NumericError("training diverged at iteration " + std::to_string(iteration) + ": landmark loss " +
                         format_double(r.train_landmark) + " exceeds " + format_double(config.divergence_factor) +
                         "x its initial value " + format_double(first_landmark));
    }
  };

  std::vector<Example> batch;
  batch.reserve(B);
  for (epoch = 0; epoch < config.epochs; ++epoch) {
    eta1 = config.eta1 / (1.0 + config.eta1_decay * static_cast<double>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < N; start += B) {
      batch.clear();
      for (std::size_t k = start; k < std::min(start + B, N); ++k) batch.push_back(train_data.examples[order[k]]);
      const LossBreakdown l = sgd_step(state, batch, eta1, config.eta2, config.decay_step);
      ++iteration;
      interval_landmark += l.landmark_sq_loss;
      interval_samples += l.samples;
      for (std::size_t t = 0; t < T; ++t) {
        interval_ce[t] += l.attribute_ce[t];
        interval_labelled[t] += l.labelled[t];
      }
      if (config.log_every && iteration % config.log_every == 0) emit_row();
    }

    // Closed-form steps at the end of the epoch: Υ, then Λ.
    const bool cov_due =
        config.learn_covariance && config.cov_update_every && (epoch + 1) % config.cov_update_every == 0;
    const bool strip_due = T > 0 && (epoch + 1) % config.strip_every == 0;
    const bool lambda_due = strip_due && config.mode != TrainMode::kEarlyStopping && !config.fixed_lambda;
    std::vector<std::vector<double>> features;
    if (strip_due || (cov_due && config.audit)) features = compute_features(train_data.examples, state);

    if (cov_due) {
      AlternationCheck check{iteration, 2, 0, 0, 0, 0};
      if (config.audit) check.before = compute_loss_from_features(features, train_data.examples, state).total;
      state.covariance = update_covariance(state.weights).covariance;
      if (config.audit) {
        check.after = compute_loss_from_features(features, train_data.examples, state).total;
        result.audits.push_back(check);
      }
    }

    val = evaluate_split(val_data, state);
    if (strip_due) {
      const LossBreakdown train_loss = compute_loss_from_features(features, train_data.examples, state);
      std::vector<double> train_ce(T);
      for (std::size_t t = 0; t < T; ++t) {
        if (train_loss.labelled[t]) last_train_ce[t] = train_loss.mean_ce(t);
        train_ce[t] = last_train_ce[t];
      }
      strip.record(iteration, train_ce, val.ce);

      if (config.mode == TrainMode::kEarlyStopping) {
        for (std::size_t t = 0; t < T; ++t) {
          if (halted[t] || strip.size() < config.tau + 1) continue;
          const double v0 = strip.back(config.tau).validation[t], v1 = strip.back(0).validation[t];
          if (v0 > 0.0 && (v0 - v1) / v0 <= config.early_stop_threshold) {
            halted[t] = true;
            state.coefficients.lambda[t] = 0.0;
          }
        }
      } else if (lambda_due) {
        std::vector<std::optional<double>> mu(T);
        std::vector<bool> has_mu(T);
        for (std::size_t t = 0; t < T; ++t) {
          mu[t] = compute_mu(strip, t, config.rho, config.tau);
          has_mu[t] = mu[t].has_value();
        }
        AlternationCheck check{iteration, 3, 0, 0, 0, 0};
        CoefficientState next = update_lambda(state.coefficients, mu, train_ce);
        if (config.audit) {
          // The prior is evaluated with the new μ on both sides: it is the sub-problem's fixed data.
          CoefficientState old_with_new_mu = state.coefficients;
          old_with_new_mu.mu = next.mu;
          check.before = train_loss.total;
          check.with_prior_before = train_loss.total + prior_term(train_loss, old_with_new_mu, has_mu);
        }
        state.coefficients = std::move(next);
        if (config.audit) {
          const LossBreakdown after = compute_loss_from_features(features, train_data.examples, state);
          check.after = after.total;
          check.with_prior_after = after.total + prior_term(after, state.coefficients, has_mu);
          result.audits.push_back(check);
        }
      }
    }
    emit_row();
  }
  result.checkpoint.state = std::move(state);
  result.checkpoint.iteration = iteration;
  return result;
}

}  // namespace

ModelState initial_state(const NetConfig& net, const TaskLayout& layout, const TrainConfig& config) {
  std::vector<std::size_t> streams(layout.attribute_count());
  std::iota(streams.begin(), streams.end(), std::size_t{0});
  return make_state(net, layout, config, streams);
}

TrainResult train(const Dataset& train_set, const Dataset& validation_set, const TrainConfig& config,
                  const NetConfig& net) {
  config.validate();
  net.validate();
  if (!(train_set.layout == validation_set.layout)) throw ConfigError("train and validation layouts differ");
  const auto active = active_attributes(train_set.layout, config);
  const TaskLayout layout = active_layout(train_set.layout, active);
  if (config.learn_covariance && net.feature_dim < layout.task_count()) {
    throw ConfigError("feature_dim " + std::to_string(net.feature_dim) + " is below the task count " +
                      std::to_string(layout.task_count()) +
                      "; the learned task covariance would be singular (widen the feature layer or set "
                      "learn_covariance=false)");
  }
  ModelState state = make_state(net, layout, config, head_streams(active));
  state.landmark_offset = mean_shape(train_set);
  const auto& offset = state.landmark_offset;
  const auto train_view = make_view(train_set, offset, active, stream_seed(config.seed, kRandomLabelStream));
  const auto val_view = make_view(validation_set, offset, active, stream_seed(config.seed, kRandomLabelStream + 100));
  TrainResult r = run(std::move(state), train_view, val_view, config);
  r.checkpoint.config_hash = config_hash(config, net);
  r.active_attributes = active;
  return r;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, const NetConfig& net) {
  config.validate();
  auto [train_set, val_set] = split(dataset, config.validation_fraction, config.seed);
  return train(train_set, val_set, config, net);
}

namespace {

TrainResult landmark_only(ModelState state, const Dataset& train_set, const Dataset& validation_set,
                          TrainConfig config) {
  config.mode = TrainMode::kFldOnly;
  config.learn_covariance = false;
  config.validate();
  const auto train_view = make_view(train_set, state.landmark_offset, {}, 0);
  const auto val_view = make_view(validation_set, state.landmark_offset, {}, 0);
  TrainResult r = run(std::move(state), train_view, val_view, config);
  r.checkpoint.config_hash = config_hash(config, r.checkpoint.state.net);
  return r;
}

ModelState dense_state(const NetConfig& net, FilterBank filters, const Dataset& train_set,
                       const Dataset& validation_set, const TrainConfig& config) {
  for (const Dataset* d : {&train_set, &validation_set}) {
    for (const auto& s : d->samples) {
      if (s.image.shape() != Shape{net.input_channels, net.input_side, net.input_side}) {
        throw ConfigError("image size " + shape_string(s.image.shape()) + " does not match the network input " +
                          shape_string({net.input_channels, net.input_side, net.input_side}));
      }
    }
  }
  filters.check(net);
  ModelState s;
  s.net = net;
  s.layout = train_set.layout.with_attributes({});
  s.layout.validate();
  s.filters = std::move(filters);
  s.weights = init_head(net.feature_dim, s.layout.landmark_count, {}, config);
  s.covariance = initial_covariance(s.layout.landmark_count);
  s.coefficients = CoefficientState::initial(0, config.epsilon, config.rho);
  s.landmark_offset = mean_shape(train_set);
  return s;
}

}  // namespace

TrainResult fine_tune(const Checkpoint& pretrained, const Dataset& train_set, const Dataset& validation_set,
                      const TrainConfig& config) {
  const NetConfig& net = pretrained.state.net;
  try {
    net.validate();
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("checkpoint network is not usable: ") + e.what());
  }
  return landmark_only(dense_state(net, pretrained.state.filters, train_set, validation_set, config), train_set, validation_set,
                       config);
}

TrainResult train_from_scratch(const NetConfig& net, const Dataset& train_set, const Dataset& validation_set,
                               const TrainConfig& config) {
  net.validate();
  return landmark_only(dense_state(net, init_filters(net, stream_seed(config.seed, kFilterStream)), train_set,
                                   validation_set, config),
                       train_set, validation_set, config);
}

std::vector<std::vector<double>> predict_landmarks(const ModelState& state, std::span<const Example> batch) {
  const auto features = compute_features(batch, state);
  std::vector<std::vector<double>> out;
  out.reserve(features.size());
  for (const auto& x : features) {
    auto p = predict_landmarks(x, state.weights, state.layout.landmark_count);
    for (std::size_t m = 0; m < p.size(); ++m) p[m] += state.landmark_offset[m];
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> mean_shape(const Dataset& dataset) {
  if (dataset.empty()) throw DataError("mean_shape: dataset is empty");
  std::vector<double> mean(dataset.layout.landmark_count, 0.0);
  for (const auto& s : dataset.samples) {
    for (std::size_t m = 0; m < mean.size(); ++m) mean[m] += s.landmarks[m];
  }
  for (double& v : mean) v /= static_cast<double>(dataset.size());
  return mean;
}

MetricsReport evaluate(const ModelState& state, const Dataset& dataset) {
  if (dataset.empty()) throw DataError("evaluate: dataset is empty");
  if (dataset.layout.landmark_count != state.layout.landmark_count) {
    throw ConfigError("dataset has M=" + std::to_string(dataset.layout.landmark_count) + " but the model has M=" +
                      std::to_string(state.layout.landmark_count));
  }
  std::vector<Example> ex;
  std::vector<std::vector<double>> truths;
  for (const auto& s : dataset.samples) {
    ex.push_back({&s.image, s.landmarks, {}, {}});
    truths.push_back(s.landmarks);
  }
  return evaluate_predictions(predict_landmarks(state, ex), truths, state.layout.left_eye, state.layout.right_eye);
}

}  // namespace tcmt
