#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "tcmt/dynamic_coefficients.hpp"
#include "tcmt/tensor.hpp"

using namespace tcmt;

namespace {

ErrorStrip strip_of(const std::vector<std::pair<double, double>>& train_val) {
  ErrorStrip s(1, 10);
  std::size_t it = 0;
  for (auto [tr, va] : train_val) {
    const double t[] = {tr}, v[] = {va};
    s.record(it += 100, t, v);
  }
  return s;
}

// Brute-force argmin of λ·CE + ½(λ − μ)² over `points` evenly spaced λ in [lo, hi].
double grid_argmin(double mu, double ce, double lo, double hi, int points) {
  double best = lo, best_v = std::numeric_limits<double>::infinity();
  for (int k = 0; k < points; ++k) {
    const double l = lo + (hi - lo) * k / (points - 1);
    const double v = l * ce + 0.5 * (l - mu) * (l - mu);
    if (v < best_v) {
      best_v = v;
      best = l;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("trend coefficient from strip endpoints") {
  const auto halved = strip_of({{1.0, 1.0}, {0.8, 0.7}, {0.6, 0.6}, {0.5, 0.5}});
  REQUIRE(compute_mu(halved, 0, 1.0, 3).has_value());
  CHECK(*compute_mu(halved, 0, 1.0, 3) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(*compute_mu(halved, 0, 4.0, 3) == doctest::Approx(1.0).epsilon(1e-15));

  // Validation falls 10% while training rises 10%: the trend is negative.
  const auto over = strip_of({{1.0, 1.0}, {1.05, 0.95}, {1.08, 0.92}, {1.1, 0.9}});
  CHECK(*compute_mu(over, 0, 2.0, 3) == doctest::Approx(-0.02).epsilon(1e-13));

  const auto flat = strip_of({{0.4, 0.4}, {0.4, 0.4}, {0.4, 0.4}, {0.4, 0.4}});
  CHECK(*compute_mu(flat, 0, 1.0, 3) == 0.0);
}

TEST_CASE("trend coefficient warmup") {
  const auto short_strip = strip_of({{1.0, 1.0}, {0.5, 0.5}, {0.4, 0.4}});
  CHECK_FALSE(compute_mu(short_strip, 0, 1.0, 3).has_value());
  CHECK(compute_mu(short_strip, 0, 1.0, 2).has_value());
  const auto zero = strip_of({{0.0, 1.0}, {0.0, 0.5}, {0.0, 0.4}, {0.0, 0.3}});
  CHECK_FALSE(compute_mu(zero, 0, 1.0, 3).has_value());
  CHECK_THROWS_AS(compute_mu(zero, 1, 1.0, 3), DimensionError);
}

TEST_CASE("a strip of capacity 2τ yields a trend once full") {
  const std::size_t tau = 3;
  ErrorStrip s(2, 2 * tau);
  for (std::size_t i = 1; i <= 4 * tau; ++i) {
    const double v[] = {1.0 / static_cast<double>(i), 2.0 / static_cast<double>(i)};
    s.record(10 * i, v, v);
    CHECK(s.size() <= 2 * tau);
    if (i >= 2 * tau) {
      for (std::size_t t = 0; t < 2; ++t) CHECK(compute_mu(s, t, 1.0, tau).has_value());
    }
  }
}

TEST_CASE("error strip keeps a contiguous window") {
  ErrorStrip s(2, 3);
  for (std::size_t i = 1; i <= 5; ++i) {
    const double v[] = {static_cast<double>(i), 0.0};
    s.record(i, v, v);
    CHECK(s.size() == std::min<std::size_t>(i, 3));
  }
  CHECK(s.entries().front().iteration == 3);
  CHECK(s.back().iteration == 5);
  for (std::size_t k = 0; k + 1 < s.size(); ++k) CHECK(s.entries()[k + 1].iteration > s.entries()[k].iteration);

  const double ok[] = {1.0, 1.0}, neg[] = {-0.1, 1.0}, one[] = {1.0};
  CHECK_THROWS_AS(s.record(6, neg, ok), NumericError);
  CHECK_THROWS_AS(s.record(6, one, one), DimensionError);
  CHECK_THROWS_AS(s.record(5, ok, ok), DimensionError);
  CHECK_THROWS_AS(ErrorStrip(1, 1), DimensionError);
}

TEST_CASE("coefficient update closed form") {
  const CoefficientState st = CoefficientState::initial(4, 0.01, 1.0);
  const std::vector<std::optional<double>> mu = {0.9, -1.0, 5.0, std::nullopt};
  const std::vector<double> ce = {0.05, 0.3, 0.01, 0.1};
  const CoefficientState n = update_lambda(st, mu, ce);
  CHECK(n.lambda[0] == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(n.lambda[1] == 0.01);  // clamped at the floor
  CHECK(n.lambda[2] == 1.0);   // clamped at one
  CHECK(n.lambda[3] == 1.0);   // warmup keeps the previous value
  CHECK(n.mu[0] == 0.9);
  CHECK(update_lambda(n, mu, ce) == n);  // idempotent for frozen inputs
  CHECK(n.mu[3] == 0.0);
  for (double l : n.lambda) CHECK((l >= n.floor && l <= 1.0));

  const std::vector<std::optional<double>> shortmu = {1.0};
  CHECK_THROWS_AS(update_lambda(st, shortmu, ce), DimensionError);
  CHECK_THROWS_AS(CoefficientState::initial(2, 0.0, 1.0), DimensionError);
}

TEST_CASE("coefficient update matches a grid search") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> mu_d(-0.5, 2.5), ce_d(0.0, 1.5);
  const double eps = 0.01;
  const int points = 10000;
  const double step = (1.0 - eps) / (points - 1);
  for (int k = 0; k < 100; ++k) {
    const double mu = mu_d(rng), ce = ce_d(rng);
    CoefficientState st = CoefficientState::initial(1, eps, 1.0);
    const std::optional<double> m[] = {mu};
    const double c[] = {ce};
    const double closed = update_lambda(st, m, c).lambda[0];
    CHECK(std::abs(closed - grid_argmin(mu, ce, eps, 1.0, points)) <= step);
  }
}

TEST_CASE("coefficient is monotone in the trend and antitone in the loss") {
  CoefficientState st = CoefficientState::initial(1, 0.01, 1.0);
  double prev = 0.0;
  for (double mu = -1.0; mu <= 2.0; mu += 0.05) {
    const std::optional<double> m[] = {mu};
    const double c[] = {0.3};
    const double l = update_lambda(st, m, c).lambda[0];
    CHECK(l >= prev);
    prev = l;
  }
  prev = 2.0;
  for (double ce = 0.0; ce <= 2.0; ce += 0.05) {
    const std::optional<double> m[] = {1.2};
    const double c[] = {ce};
    const double l = update_lambda(st, m, c).lambda[0];
    CHECK(l <= prev);
    prev = l;
  }
}
