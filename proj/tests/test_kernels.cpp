#include <doctest.h>

#include <numeric>

#include "support.hpp"
#include "tcmt/kernels.hpp"
#include "tcmt/reference_kernels.hpp"

using namespace tcmt;
using test::numeric_gradient;
using test::random_tensor;
using test::relative_error;

TEST_CASE("tensor keeps shape and storage in step") {
  Tensor t({2, 3, 4}, 1.5);
  CHECK(t.size() == 24);
  CHECK(shape_product(t.shape()) == t.size());
  CHECK(t.sum() == doctest::Approx(36.0));
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), DimensionError);
  CHECK_THROWS_AS(t.reshaped({5, 5}), DimensionError);
  CHECK(t.reshaped({24}).size() == 24);
  CHECK(Tensor().empty());
  t[3] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("conv2d forward examples") {
  ConvSpec spec{1, 20, 5, 1};
  Tensor out = kernels::conv2d_forward(Tensor({1, 60, 60}, 0.5), Tensor({20, 1, 5, 5}, 0.1), spec);
  CHECK(out.shape() == Shape{20, 56, 56});

  std::mt19937_64 rng(1);
  Tensor img = random_tensor({1, 3, 3}, rng);
  Tensor ident = kernels::conv2d_forward(img, Tensor({1, 1, 1, 1}, 1.0), ConvSpec{1, 1, 1, 1});
  CHECK(ident == img);

  Tensor ones = kernels::conv2d_forward(Tensor({1, 3, 3}, 1.0), Tensor({1, 1, 2, 2}, 1.0), ConvSpec{1, 1, 2, 1});
  REQUIRE(ones.shape() == Shape{1, 2, 2});
  for (double v : ones.values()) CHECK(v == 4.0);
}

TEST_CASE("conv2d with a one-hot kernel is a shifted crop") {
  std::mt19937_64 rng(2);
  const Tensor img = random_tensor({2, 7, 7}, rng);
  for (std::size_t dy = 0; dy < 3; ++dy) {
    for (std::size_t dx = 0; dx < 3; ++dx) {
      for (std::size_t c = 0; c < 2; ++c) {
        Tensor k({1, 2, 3, 3});
        k[((0 * 2 + c) * 3 + dy) * 3 + dx] = 1.0;
        const Tensor out = kernels::conv2d_forward(img, k, ConvSpec{2, 1, 3, 1});
        for (std::size_t y = 0; y < 5; ++y)
          for (std::size_t x = 0; x < 5; ++x) CHECK(out.at(0, y, x) == img.at(c, y + dy, x + dx));
      }
    }
  }
}

TEST_CASE("conv2d shape errors name the axis") {
  const Tensor k({2, 1, 3, 3});
  CHECK_THROWS_WITH_AS(kernels::conv2d_forward(Tensor({2, 6, 6}), k, ConvSpec{1, 2, 3, 1}),
                       doctest::Contains("channel"), DimensionError);
  CHECK_THROWS_WITH_AS(kernels::conv2d_forward(Tensor({1, 2, 6}), k, ConvSpec{1, 2, 3, 1}),
                       doctest::Contains("height"), DimensionError);
  CHECK_THROWS_WITH_AS(kernels::conv2d_forward(Tensor({1, 6, 6}), k, ConvSpec{1, 2, 3, 2}),
                       doctest::Contains("height"), DimensionError);
  CHECK_THROWS_AS(kernels::conv2d_forward(Tensor({1, 6, 6}), Tensor({2, 1, 2, 2}), ConvSpec{1, 2, 3, 1}),
                  DimensionError);
  CHECK_THROWS_AS((ConvSpec{1, 1, 0, 1}.validate()), DimensionError);
  CHECK_THROWS_AS((ConvSpec{1, 1, 1, 0}.validate()), DimensionError);
}

TEST_CASE("conv2d backward trivial cases") {
  std::mt19937_64 rng(3);
  const Tensor in = random_tensor({1, 4, 4}, rng);
  const Tensor k = random_tensor({1, 1, 2, 2}, rng);
  const ConvSpec spec{1, 1, 2, 1};
  ConvGrads z = kernels::conv2d_backward(Tensor({1, 3, 3}), in, k, spec);
  CHECK(z.input.squared_norm() == 0.0);
  CHECK(z.kernels.squared_norm() == 0.0);

  Tensor go({1, 4, 4});
  go.at(0, 2, 1) = 1.0;
  ConvGrads one = kernels::conv2d_backward(go, in, Tensor({1, 1, 1, 1}, 0.7), ConvSpec{1, 1, 1, 1});
  CHECK(one.kernels[0] == in.at(0, 2, 1));
}

namespace {

// Loss Σ w ⊙ conv(in, k); the kernel and input gradients are checked against central differences.
void check_conv_gradients(const ConvSpec& spec, std::size_t side, std::uint64_t seed, double tol) {
  std::mt19937_64 rng(seed);
  Tensor in = random_tensor({spec.in_channels, side, side}, rng);
  Tensor k = random_tensor({spec.out_channels, spec.in_channels, spec.kernel_size, spec.kernel_size}, rng);
  Tensor b = random_tensor({spec.out_channels}, rng);
  const std::size_t o = spec.output_side(side);
  const Tensor w = random_tensor({spec.out_channels, o, o}, rng);
  auto loss = [&] { return test::dot(w.values(), kernels::conv2d_forward(in, k, b, spec).values()); };

  const ConvGrads g = kernels::conv2d_backward(w, in, k, spec);
  CHECK(relative_error(g.kernels.values(), numeric_gradient(k.values(), loss)) < tol);
  CHECK(relative_error(g.input.values(), numeric_gradient(in.values(), loss)) < tol);
  CHECK(relative_error(g.bias.values(), numeric_gradient(b.values(), loss)) < tol);
}

}  // namespace

TEST_CASE("conv2d backward matches finite differences") {
  check_conv_gradients({1, 1, 2, 1}, 4, 4, 1e-6);
  check_conv_gradients({2, 3, 3, 1}, 6, 5, 1e-6);
  check_conv_gradients({2, 2, 2, 2}, 6, 6, 1e-6);
}

TEST_CASE("maxpool forward and backward") {
  Tensor big({20, 56, 56}, 1.0);
  CHECK(kernels::maxpool2_forward(big).output.shape() == Shape{20, 28, 28});
  const Tensor flat = kernels::maxpool2_forward(Tensor({2, 4, 4}, 3.0)).output;
  for (double v : flat.values()) CHECK(v == 3.0);
  CHECK_THROWS_AS(kernels::maxpool2_forward(Tensor({1, 3, 4})), DimensionError);
  CHECK_THROWS_AS(kernels::maxpool2_forward(Tensor({1, 4, 5})), DimensionError);

  // Every placement of {1,2,3,4} in the window: the max is 4 and only its cell gets gradient.
  std::vector<double> perm = {1, 2, 3, 4};
  do {
    const Tensor in({1, 2, 2}, perm);
    const PoolResult p = kernels::maxpool2_forward(in);
    CHECK(p.output[0] == 4.0);
    const Tensor g = kernels::maxpool2_backward(Tensor({1, 1, 1}, 2.5), p.argmax, in.shape());
    for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == (perm[i] == 4.0 ? 2.5 : 0.0));
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST_CASE("maxpool backward conserves mass at argmax cells") {
  std::mt19937_64 rng(7);
  const Tensor in = random_tensor({3, 6, 6}, rng);
  const PoolResult p = kernels::maxpool2_forward(in);
  const Tensor go = random_tensor({3, 3, 3}, rng);
  const Tensor g = kernels::maxpool2_backward(go, p.argmax, in.shape());
  CHECK(g.sum() == doctest::Approx(go.sum()).epsilon(1e-14));
  std::vector<bool> hit(in.size(), false);
  for (std::size_t a : p.argmax) hit[a] = true;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!hit[i]) CHECK(g[i] == 0.0);
}

TEST_CASE("maxpool ties go to the first cell in scan order") {
  const PoolResult p = kernels::maxpool2_forward(Tensor({1, 2, 2}, 1.0));
  CHECK(p.argmax[0] == 0);
}

TEST_CASE("relu forward and backward") {
  const Tensor neg({5}, std::vector<double>{-1, -2, -0.5, -3, -1e-9});
  const Tensor cut = kernels::relu_forward(neg);
  for (double v : cut.values()) CHECK(v == 0.0);
  const Tensor pos({3}, std::vector<double>{1, 2, 3});
  CHECK(kernels::relu_forward(pos) == pos);

  std::mt19937_64 rng(8);
  Tensor x = random_tensor({2, 4, 4}, rng);
  for (double& v : x.values())
    if (std::abs(v) < 0.05) v = 0.3;  // keep away from the kink
  const Tensor w = random_tensor({2, 4, 4}, rng);
  auto loss = [&] { return test::dot(w.values(), kernels::relu_forward(x).values()); };
  const Tensor g = kernels::relu_backward(w, x);
  CHECK(relative_error(g.values(), numeric_gradient(x.values(), loss)) < 1e-6);
}

TEST_CASE("fc forward and backward") {
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  const Tensor x({3}, std::vector<double>{0.2, -1.0, 4.0});
  CHECK(kernels::fc_forward(x, eye, Tensor({3})) == x);
  const Tensor bias({2}, std::vector<double>{0.5, -0.25});
  CHECK(kernels::fc_forward(x, Tensor({2, 3}), bias) == bias);
  CHECK_THROWS_AS(kernels::fc_forward(Tensor({4}), Tensor({2, 3}), bias), DimensionError);

  std::mt19937_64 rng(9);
  Tensor in = random_tensor({4}, rng), W = random_tensor({3, 4}, rng), b = random_tensor({3}, rng);
  const Tensor w = random_tensor({3}, rng);
  auto loss = [&] { return test::dot(w.values(), kernels::fc_forward(in, W, b).values()); };
  const FcGrads g = kernels::fc_backward(w, in, W);
  CHECK(relative_error(g.weights.values(), numeric_gradient(W.values(), loss)) < 1e-6);
  CHECK(relative_error(g.input.values(), numeric_gradient(in.values(), loss)) < 1e-6);
  CHECK(relative_error(g.bias.values(), numeric_gradient(b.values(), loss)) < 1e-6);
}

TEST_CASE("parallel kernels agree with the serial reference") {
  std::mt19937_64 rng(10);
  struct Case {
    ConvSpec spec;
    std::size_t side;
  };
  // The last case is large enough to take the threaded path.
  for (const Case& c : {Case{{1, 4, 5, 1}, 12}, Case{{3, 5, 3, 2}, 13}, Case{{8, 16, 3, 1}, 30}}) {
    const Tensor in = random_tensor({c.spec.in_channels, c.side, c.side}, rng);
    const Tensor k = random_tensor({c.spec.out_channels, c.spec.in_channels, c.spec.kernel_size, c.spec.kernel_size}, rng);
    const Tensor b = random_tensor({c.spec.out_channels}, rng);
    const Tensor fast = kernels::conv2d_forward(in, k, b, c.spec);
    const Tensor slow = reference::conv2d_forward(in, k, b, c.spec);
    CHECK(test::max_abs_diff(fast.values(), slow.values()) < 1e-12);

    const Tensor go = random_tensor(fast.shape(), rng);
    const ConvGrads gf = kernels::conv2d_backward(go, in, k, c.spec);
    const ConvGrads gs = reference::conv2d_backward(go, in, k, c.spec);
    CHECK(test::max_abs_diff(gf.kernels.values(), gs.kernels.values()) < 1e-11);
    CHECK(test::max_abs_diff(gf.input.values(), gs.input.values()) < 1e-11);
    CHECK(test::max_abs_diff(gf.bias.values(), gs.bias.values()) < 1e-11);
  }

  const Tensor in = random_tensor({16, 40, 40}, rng);
  const PoolResult pf = kernels::maxpool2_forward(in);
  const PoolResult ps = reference::maxpool2_forward(in);
  CHECK(pf.output == ps.output);
  CHECK(pf.argmax == ps.argmax);
  const Tensor go = random_tensor(pf.output.shape(), rng);
  CHECK(kernels::maxpool2_backward(go, pf.argmax, in.shape()) == reference::maxpool2_backward(go, ps.argmax, in.shape()));
  CHECK(kernels::relu_forward(in) == reference::relu_forward(in));
  CHECK(kernels::relu_backward(in, in) == reference::relu_backward(in, in));

  const Tensor x = random_tensor({300}, rng), W = random_tensor({200, 300}, rng), b = random_tensor({200}, rng);
  CHECK(test::max_abs_diff(kernels::fc_forward(x, W, b).values(), reference::fc_forward(x, W, b).values()) < 1e-12);
  const Tensor gy = random_tensor({200}, rng);
  const FcGrads ff = kernels::fc_backward(gy, x, W), fs = reference::fc_backward(gy, x, W);
  CHECK(test::max_abs_diff(ff.input.values(), fs.input.values()) < 1e-12);
  CHECK(ff.weights == fs.weights);
}

TEST_CASE("parallel conv is reproducible run to run") {
  std::mt19937_64 rng(11);
  const ConvSpec spec{8, 16, 3, 1};
  const Tensor in = random_tensor({8, 30, 30}, rng);
  const Tensor k = random_tensor({16, 8, 3, 3}, rng);
  const Tensor a = kernels::conv2d_forward(in, k, spec);
  for (int rep = 0; rep < 3; ++rep) CHECK(kernels::conv2d_forward(in, k, spec) == a);
}
