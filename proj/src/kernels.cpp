#include "tcmt/kernels.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tcmt {

namespace {

// Below this many multiply-adds a kernel runs serially; thread startup costs
// more than the work.
constexpr std::size_t kMinParallelWork = 1u << 15;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

// Patch matrix [C*k*k, Ho*Wo]: row (c,ky,kx) holds the input pixels that tap
// meets at each output position.
std::vector<double> im2col(const Tensor& input, const ConvSpec& spec, std::size_t Ho, std::size_t Wo,
                           bool parallel) {
  const std::size_t C = spec.in_channels, k = spec.kernel_size, s = spec.stride;
  const std::size_t H = input.dim(1), W = input.dim(2), P = Ho * Wo;
  std::vector<double> col(C * k * k * P);
  const double* in = input.data();

#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* dst = col.data() + ((c * k + ky) * k + kx) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const double* in_row = in + (c * H + oy * s + ky) * W + kx;
          double* d = dst + oy * Wo;
          if (s == 1) {
            std::copy(in_row, in_row + Wo, d);
          } else {
            for (std::size_t ox = 0; ox < Wo; ++ox) d[ox] = in_row[ox * s];
          }
        }
      }
    }
  }
  return col;
}

}  // namespace

void ConvSpec::validate() const {
  if (kernel_size < 1) throw DimensionError("conv kernel_size must be >= 1");
  if (stride < 1) throw DimensionError("conv stride must be >= 1");
  if (in_channels < 1 || out_channels < 1) throw DimensionError("conv channel counts must be >= 1");
}

std::size_t ConvSpec::output_side(std::size_t input_side, const char* axis) const {
  validate();
  if (input_side < kernel_size) {
    throw DimensionError(std::string("conv input ") + axis + " " + std::to_string(input_side) +
                         " smaller than kernel " + std::to_string(kernel_size));
  }
  const std::size_t span = input_side - kernel_size;
  if (span % stride != 0) {
    throw DimensionError(std::string("conv input ") + axis + " " + std::to_string(input_side) +
                         " not tiled exactly by kernel " + std::to_string(kernel_size) +
                         " with stride " + std::to_string(stride));
  }
  return span / stride + 1;
}

namespace detail {

void check_conv_args(const Tensor& input, const Tensor& kernels, const ConvSpec& spec) {
  spec.validate();
  if (input.rank() != 3) {
    throw DimensionError("conv input must be [C,H,W], got " + shape_string(input.shape()));
  }
  if (input.dim(0) != spec.in_channels) {
    throw DimensionError("conv input channel axis: expected " + std::to_string(spec.in_channels) +
                         ", got " + std::to_string(input.dim(0)));
  }
  require_shape(kernels,
                {spec.out_channels, spec.in_channels, spec.kernel_size, spec.kernel_size},
                "conv kernels");
  spec.output_side(input.dim(1), "height");
  spec.output_side(input.dim(2), "width");
}

void check_pool_input(const Tensor& input) {
  if (input.rank() != 3) {
    throw DimensionError("maxpool input must be [C,H,W], got " + shape_string(input.shape()));
  }
  if (input.dim(1) % 2 != 0) {
    throw DimensionError("maxpool height axis must be even, got " + std::to_string(input.dim(1)));
  }
  if (input.dim(2) % 2 != 0) {
    throw DimensionError("maxpool width axis must be even, got " + std::to_string(input.dim(2)));
  }
}

void check_fc_args(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2) {
    throw DimensionError("fc weights must be [D_out,D_in], got " + shape_string(weights.shape()));
  }
  if (x.size() != weights.dim(1)) {
    throw DimensionError("fc input axis: expected " + std::to_string(weights.dim(1)) +
                         " values, got " + std::to_string(x.size()));
  }
  if (!bias.empty() && bias.size() != weights.dim(0)) {
    throw DimensionError("fc bias axis: expected " + std::to_string(weights.dim(0)) +
                         " values, got " + std::to_string(bias.size()));
  }
}

}  // namespace detail

namespace kernels {

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const ConvSpec& spec) {
  return conv2d_forward(input, kernels, Tensor(), spec);
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      const ConvSpec& spec) {
  detail::check_conv_args(input, kernels, spec);
  if (!bias.empty()) require_shape(bias, {spec.out_channels}, "conv bias");

  const std::size_t C = spec.in_channels, F = spec.out_channels, k = spec.kernel_size;
  const std::size_t Ho = spec.output_side(input.dim(1)), Wo = spec.output_side(input.dim(2), "width");
  const std::size_t P = Ho * Wo, J = C * k * k;
  Tensor out({F, Ho, Wo});
  const bool parallel = F * P * J >= kMinParallelWork;

  const std::vector<double> col = im2col(input, spec, Ho, Wo, parallel);
  const ConstRowMap cols(col.data(), Eigen::Index(J), Eigen::Index(P));
  const ConstRowMap K(kernels.data(), Eigen::Index(F), Eigen::Index(J));
  RowMap o(out.data(), Eigen::Index(F), Eigen::Index(P));

#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t f = 0; f < F; ++f) {
    const auto fi = Eigen::Index(f);
    o.row(fi).noalias() = K.row(fi) * cols;
    if (!bias.empty()) o.row(fi).array() += bias[f];
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& kernels,
                          const ConvSpec& spec, bool need_input_grad) {
  detail::check_conv_args(input, kernels, spec);
  const std::size_t C = spec.in_channels, F = spec.out_channels, k = spec.kernel_size,
                    s = spec.stride;
  const std::size_t H = input.dim(1), W = input.dim(2);
  const std::size_t Ho = spec.output_side(H), Wo = spec.output_side(W, "width");
  require_shape(grad_out, {F, Ho, Wo}, "conv grad_out");
  const std::size_t P = Ho * Wo, J = C * k * k, kk = k * k;

  ConvGrads g{Tensor({C, H, W}), Tensor({F, C, k, k}), Tensor({F})};
  const bool parallel = F * P * J >= kMinParallelWork;

  const std::vector<double> col = im2col(input, spec, Ho, Wo, parallel);
  const ConstRowMap cols(col.data(), Eigen::Index(J), Eigen::Index(P));
  const ConstRowMap go(grad_out.data(), Eigen::Index(F), Eigen::Index(P));
  const ConstRowMap K(kernels.data(), Eigen::Index(F), Eigen::Index(J));
  RowMap gk(g.kernels.data(), Eigen::Index(F), Eigen::Index(J));

#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t f = 0; f < F; ++f) {
    const auto fi = Eigen::Index(f);
    g.bias[f] = go.row(fi).sum();
    gk.row(fi).noalias() = go.row(fi) * cols.transpose();
  }

  if (!need_input_grad) return g;

  double* gi = g.input.data();
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t c = 0; c < C; ++c) {
    // Column gradients of this channel's k*k taps, then scattered back.
    const RowMatrix gcol = K.middleCols(Eigen::Index(c * kk), Eigen::Index(kk)).transpose() * go;
    double* gi_c = gi + c * H * W;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = gcol.data() + (ky * k + kx) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          double* gi_row = gi_c + (oy * s + ky) * W + kx;
          const double* g_row = src + oy * Wo;
          for (std::size_t ox = 0; ox < Wo; ++ox) gi_row[ox * s] += g_row[ox];
        }
      }
    }
  }
  return g;
}

PoolResult maxpool2_forward(const Tensor& input) {
  detail::check_pool_input(input);
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::size_t Ho = H / 2, Wo = W / 2;
  PoolResult r{Tensor({C, Ho, Wo}), std::vector<std::size_t>(C * Ho * Wo)};
  const double* in = input.data();
  const bool parallel = C * H * W >= kMinParallelWork;

#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        const std::size_t base = (c * H + 2 * oy) * W + 2 * ox;
        const std::size_t cand[4] = {base, base + 1, base + W, base + W + 1};
        std::size_t best = cand[0];
        for (int q = 1; q < 4; ++q) {
          if (in[cand[q]] > in[best]) best = cand[q];
        }
        const std::size_t o = (c * Ho + oy) * Wo + ox;
        r.output[o] = in[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                         const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw DimensionError("maxpool backward: argmax record has " + std::to_string(argmax.size()) +
                         " entries, grad_out has " + std::to_string(grad_out.size()));
  }
  Tensor grad_in(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= grad_in.size()) throw DimensionError("maxpool backward: argmax out of range");
    grad_in[argmax[i]] += grad_out[i];
  }
  return grad_in;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& forward_input) {
  require_shape(grad_out, forward_input.shape(), "relu grad_out");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(forward_input[i] > 0.0)) g[i] = 0.0;
  }
  return g;
}

Tensor fc_forward(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  detail::check_fc_args(x, weights, bias);
  const std::size_t out_dim = weights.dim(0), in_dim = weights.dim(1);
  Tensor out({out_dim});
  const double* Wp = weights.data();
  const double* xp = x.data();
  const bool parallel = out_dim * in_dim >= kMinParallelWork;

#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double* row = Wp + o * in_dim;
    double acc = bias.empty() ? 0.0 : bias[o];
    for (std::size_t i = 0; i < in_dim; ++i) acc += row[i] * xp[i];
    out[o] = acc;
  }
  return out;
}

FcGrads fc_backward(const Tensor& grad_out, const Tensor& x, const Tensor& weights) {
  detail::check_fc_args(x, weights, Tensor());
  const std::size_t out_dim = weights.dim(0), in_dim = weights.dim(1);
  if (grad_out.size() != out_dim) {
    throw DimensionError("fc grad_out axis: expected " + std::to_string(out_dim) + " values, got " +
                         std::to_string(grad_out.size()));
  }
  FcGrads g{Tensor(x.shape()), Tensor({out_dim, in_dim}), Tensor({out_dim})};
  const double* Wp = weights.data();
  for (std::size_t o = 0; o < out_dim; ++o) {
    const double go = grad_out[o];
    g.bias[o] = go;
    double* gw_row = g.weights.data() + o * in_dim;
    const double* w_row = Wp + o * in_dim;
    for (std::size_t i = 0; i < in_dim; ++i) {
      gw_row[i] = go * x[i];
      g.input[i] += w_row[i] * go;
    }
  }
  return g;
}

}  // namespace kernels
}  // namespace tcmt
