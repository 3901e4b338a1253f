#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tcmt/multitask_head.hpp"

using namespace tcmt;
using test::numeric_gradient;
using test::relative_error;

namespace {

// Independent evaluation of one sample's data loss from its definition.
double data_loss(std::span<const double> x, const Matrix& W, std::size_t M, const std::vector<double>& y,
                 const std::vector<double>& l, const std::vector<double>& mask, const std::vector<double>& lambda) {
  double s = 0.0;
  for (std::size_t c = 0; c < W.cols(); ++c) {
    double o = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) o += W(d, c) * x[d];
    if (c < M) {
      s += (y[c] - o) * (y[c] - o);
    } else {
      const std::size_t t = c - M;
      const double f = 1.0 / (1.0 + std::exp(-o));
      s -= lambda[t] * mask[t] * (l[t] * std::log(f) + (1.0 - l[t]) * std::log(1.0 - f));
    }
  }
  return s;
}

}  // namespace

TEST_CASE("landmark prediction is W_M transpose x") {
  Matrix W(2, 3);
  W(0, 0) = 0.3;
  W(1, 0) = 0.2;
  const std::vector<double> x = {1.0, 1.0};
  const auto o = predict_landmarks(x, W, 2);
  CHECK(o[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(o[1] == 0.0);
  CHECK(predict_landmarks(x, Matrix(2, 2), 2) == std::vector<double>{0.0, 0.0});

  W(0, 1) = 0.3;
  W(1, 1) = 0.2;
  const auto dup = predict_landmarks(x, W, 2);
  CHECK(dup[0] == dup[1]);
  CHECK_THROWS_AS(predict_landmarks(std::vector<double>{1.0}, W, 2), DimensionError);
}

TEST_CASE("attribute probabilities") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(std::abs(sigmoid(20.0) - 1.0) < 1e-8);
  CHECK(sigmoid(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(std::isfinite(log_sigmoid(-700.0)));
  CHECK(log_sigmoid(-700.0) == doctest::Approx(-700.0));
  CHECK(std::abs(log_sigmoid(700.0)) < 1e-300);
  double prev = 0.0;
  for (double z = -30.0; z <= 30.0; z += 0.5) {
    const double p = sigmoid(z);
    CHECK(p >= prev);
    prev = p;
  }
  CHECK(sigmoid(-30.0) > 0.0);

  Matrix W(1, 3);
  W(0, 1) = 2.0;
  W(0, 2) = -2.0;
  const auto p = predict_attributes(std::vector<double>{1.0}, W, 1);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == doctest::Approx(sigmoid(2.0)));
  CHECK(p[0] + p[1] == doctest::Approx(1.0));
}

TEST_CASE("cross entropy is capped at the probability floor") {
  CHECK(cross_entropy_logit(0.0, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(cross_entropy_logit(-1000.0, 1.0) == doctest::Approx(-std::log(kProbabilityFloor)));
  CHECK(cross_entropy_logit(1000.0, 1.0) == 0.0);
}

TEST_CASE("head gradients match finite differences of the data loss") {
  std::mt19937_64 rng(21);
  const std::size_t D = 3, M = 2, T = 2;
  std::vector<double> x = {0.4, -1.2, 0.7};
  Matrix W = test::random_matrix(D, M + T, rng);
  const std::vector<double> y = {0.3, 0.8}, l = {1.0, 0.0}, mask = {1.0, 1.0}, lambda = {0.7, 0.4};
  const HeadTargets tg{y, l, mask};
  const HeadGradients g = head_gradients(x, W, M, tg, lambda);

  auto loss = [&] { return data_loss(x, W, M, y, l, mask, lambda); };
  CHECK(relative_error(g.weights.values(), numeric_gradient(W.values(), loss)) < 1e-6);
  CHECK(relative_error(g.feature, numeric_gradient(x, loss)) < 1e-6);
  CHECK(g.loss.landmark + g.loss.weighted_ce == doctest::Approx(loss()).epsilon(1e-12));

  const HeadLoss hl = head_loss(x, W, M, tg, lambda);
  CHECK(hl.landmark == g.loss.landmark);
  CHECK(hl.attribute_ce == g.loss.attribute_ce);
}

TEST_CASE("perfect predictions have vanishing gradients") {
  const std::vector<double> x = {1.0, 0.5};
  Matrix W(2, 2);
  W(0, 0) = 0.2;
  W(1, 0) = 0.4;  // o = 0.4
  W(0, 1) = 40.0;  // f ≈ 1
  const std::vector<double> y = {0.4}, l = {1.0}, mask = {1.0}, lambda = {1.0};
  const HeadGradients g = head_gradients(x, W, 1, {y, l, mask}, lambda);
  for (double v : g.weights.values()) CHECK(std::abs(v) < 1e-15);
  for (double v : g.feature) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("attribute gradients scale with lambda and respect the mask") {
  std::mt19937_64 rng(22);
  const std::vector<double> x = {0.3, -0.2, 0.9, 1.1};
  const Matrix W = test::random_matrix(4, 5, rng);
  const std::vector<double> y = {0.1, 0.6}, l = {1.0, 0.0, 1.0}, mask = {1.0, 1.0, 0.0};
  const std::vector<double> lam = {0.3, 0.5, 1.0}, lam2 = {0.6, 0.5, 1.0}, zero = {0.0, 0.0, 0.0};
  const auto g1 = head_gradients(x, W, 2, {y, l, mask}, lam);
  const auto g2 = head_gradients(x, W, 2, {y, l, mask}, lam2);
  for (std::size_t d = 0; d < 4; ++d) {
    CHECK(g2.weights(d, 2) == 2.0 * g1.weights(d, 2));
    CHECK(g2.weights(d, 3) == g1.weights(d, 3));
    CHECK(g1.weights(d, 4) == 0.0);  // masked
  }
  CHECK(g1.loss.attribute_ce[2] == 0.0);

  const auto gz = head_gradients(x, W, 2, {y, l, mask}, zero);
  for (std::size_t d = 0; d < 4; ++d)
    for (std::size_t c = 2; c < 5; ++c) CHECK(gz.weights(d, c) == 0.0);
  // With every λ at zero the labels no longer matter.
  const std::vector<double> flipped = {0.0, 1.0, 0.0};
  const auto gf = head_gradients(x, W, 2, {y, flipped, mask}, zero);
  CHECK(gf.weights == gz.weights);
  CHECK(gf.feature == gz.feature);
}

TEST_CASE("squared-loss column vanishes exactly when its residual does") {
  const std::vector<double> x = {0.5, 2.0};
  Matrix W(2, 2);
  W(0, 0) = 0.2;  // o0 = 0.1, on target
  W(0, 1) = 0.4;  // o1 = 0.2, off target
  const std::vector<double> y = {0.1, 0.5};
  const auto g = head_gradients(x, W, 2, {y, {}, {}}, {});
  CHECK(g.weights(0, 0) == 0.0);
  CHECK(g.weights(1, 0) == 0.0);
  CHECK(g.weights(0, 1) != 0.0);
  CHECK(g.weights(1, 1) != 0.0);
}

TEST_CASE("head input checks") {
  const Matrix W(2, 3);
  const std::vector<double> x = {1.0, 1.0};
  const std::vector<double> y = {0.5}, l = {1.0}, mask = {1.0}, lam = {1.0};
  CHECK_THROWS_AS(head_gradients(x, W, 1, {y, l, std::vector<double>{}}, lam), DimensionError);
  CHECK_THROWS_AS(head_gradients(x, W, 1, {std::vector<double>{0.1, 0.2}, l, mask}, lam), DimensionError);
  CHECK_THROWS_AS(head_gradients(x, W, 1, {y, l, mask}, std::vector<double>{}), DimensionError);
}

TEST_CASE("task layout") {
  TaskLayout t;
  t.landmark_count = 10;
  TaskLayout::parse_attribute_list("smile:mouth;glasses:eyes;pose_left:pose;wide:eyes", t);
  t.validate();
  CHECK(t.task_count() == 14);
  CHECK(t.groups() == std::vector<std::string>{"mouth", "eyes", "pose"});
  CHECK(t.attributes_in_group("eyes") == std::vector<std::size_t>{1, 3});
  CHECK(t.with_attributes({3, 0}).attribute_list() == "wide:eyes;smile:mouth");
  TaskLayout back;
  back.landmark_count = 10;
  TaskLayout::parse_attribute_list(t.attribute_list(), back);
  CHECK(back == t);

  TaskLayout odd = t;
  odd.landmark_count = 9;
  CHECK_THROWS_AS(odd.validate(), DimensionError);
  TaskLayout eyes = t;
  eyes.right_eye = 0;
  CHECK_THROWS_AS(eyes.validate(), DimensionError);
  CHECK_THROWS_AS(TaskLayout::parse_attribute_list("smile", t), std::exception);
}
