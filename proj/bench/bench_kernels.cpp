// Times the parallel kernels against the serial reference on the layer
// shapes of the default network, and checks that both agree.

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "tcmt/feature_net.hpp"
#include "tcmt/kernels.hpp"
#include "tcmt/reference_kernels.hpp"

using namespace tcmt;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

/// Median wall time of `reps` calls, in milliseconds.
double time_ms(int reps, const std::function<void()>& f) {
  std::vector<double> t;
  for (int r = 0; r < reps; ++r) {
    const auto start = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void row(const char* name, double ref_ms, double par_ms, double diff) {
  std::printf("%-28s %10.3f %10.3f %8.2fx %10.2e\n", name, ref_ms, par_ms, ref_ms / par_ms, diff);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel kernels versus the serial reference"};
  int reps = 5;
  int threads = 0;
  app.add_option("--reps", reps, "timed repetitions per kernel (median reported)")->capture_default_str();
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);

  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %10s %10s %9s %10s\n", "kernel", "serial ms", "omp ms", "speedup", "max |diff|");

  const NetConfig net = NetConfig::default_config();
  std::mt19937_64 rng(1);
  std::size_t side = net.input_side;
  char name[64];
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const ConvSpec& s = net.layers[l].conv;
    const Tensor in = random_tensor({s.in_channels, side, side}, rng);
    const Tensor k = random_tensor({s.out_channels, s.in_channels, s.kernel_size, s.kernel_size}, rng);
    const Tensor b = random_tensor({s.out_channels}, rng);
    const Tensor ref = reference::conv2d_forward(in, k, b, s);
    const Tensor par = kernels::conv2d_forward(in, k, b, s);
    std::snprintf(name, sizeof name, "conv%zu forward %zux%zu", l + 1, side, side);
    row(name, time_ms(reps, [&] { reference::conv2d_forward(in, k, b, s); }),
        time_ms(reps, [&] { kernels::conv2d_forward(in, k, b, s); }), max_diff(ref, par));

    const Tensor go = random_tensor(ref.shape(), rng);
    const ConvGrads gr = reference::conv2d_backward(go, in, k, s);
    const ConvGrads gp = kernels::conv2d_backward(go, in, k, s);
    const double d = std::max({max_diff(gr.input, gp.input), max_diff(gr.kernels, gp.kernels),
                               max_diff(gr.bias, gp.bias)});
    std::snprintf(name, sizeof name, "conv%zu backward", l + 1);
    row(name, time_ms(reps, [&] { reference::conv2d_backward(go, in, k, s); }),
        time_ms(reps, [&] { kernels::conv2d_backward(go, in, k, s); }), d);

    if (net.layers[l].pool) {
      const PoolResult pr = reference::maxpool2_forward(ref);
      std::snprintf(name, sizeof name, "pool%zu forward", l + 1);
      row(name, time_ms(reps, [&] { reference::maxpool2_forward(ref); }),
          time_ms(reps, [&] { kernels::maxpool2_forward(ref); }),
          max_diff(pr.output, kernels::maxpool2_forward(ref).output));
    }
    side = ref.shape()[1] / (net.layers[l].pool ? 2 : 1);
  }

  const Tensor x = random_tensor({net.flat_dim()}, rng);
  const Tensor w = random_tensor({net.feature_dim, net.flat_dim()}, rng);
  const Tensor fb = random_tensor({net.feature_dim}, rng);
  row("fc forward", time_ms(reps * 10, [&] { reference::fc_forward(x, w, fb); }),
      time_ms(reps * 10, [&] { kernels::fc_forward(x, w, fb); }),
      max_diff(reference::fc_forward(x, w, fb), kernels::fc_forward(x, w, fb)));

  const FilterBank filters = init_filters(net, 7);
  const Tensor image = random_tensor({net.input_channels, net.input_side, net.input_side}, rng);
  const double full = time_ms(reps, [&] {
    ActivationCache cache;
    const Tensor feat = net_forward(net, filters, image, cache);
    net_backward(net, filters, cache, Tensor(feat.shape(), 1.0));
  });
  std::printf("\nfull network forward+backward, one image: %.3f ms\n", full);
  return 0;
}
