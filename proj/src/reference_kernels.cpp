#include "tcmt/reference_kernels.hpp"

namespace tcmt::reference {

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      const ConvSpec& spec) {
  detail::check_conv_args(input, kernels, spec);
  const std::size_t C = spec.in_channels, F = spec.out_channels, k = spec.kernel_size,
                    s = spec.stride;
  const std::size_t Ho = spec.output_side(input.dim(1)), Wo = spec.output_side(input.dim(2));
  Tensor out({F, Ho, Wo});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx)
              acc += kernels[((f * C + c) * k + ky) * k + kx] *
                     input.at(c, oy * s + ky, ox * s + kx);
        out.at(f, oy, ox) = acc + (bias.empty() ? 0.0 : bias[f]);
      }
  return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& kernels,
                          const ConvSpec& spec) {
  detail::check_conv_args(input, kernels, spec);
  const std::size_t C = spec.in_channels, F = spec.out_channels, k = spec.kernel_size,
                    s = spec.stride;
  const std::size_t H = input.dim(1), W = input.dim(2);
  const std::size_t Ho = spec.output_side(H), Wo = spec.output_side(W);
  require_shape(grad_out, {F, Ho, Wo}, "conv grad_out");
  ConvGrads g{Tensor({C, H, W}), Tensor({F, C, k, k}), Tensor({F})};
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        const double go = grad_out.at(f, oy, ox);
        g.bias[f] += go;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::size_t ki = ((f * C + c) * k + ky) * k + kx;
              g.kernels[ki] += go * input.at(c, oy * s + ky, ox * s + kx);
              g.input.at(c, oy * s + ky, ox * s + kx) += go * kernels[ki];
            }
      }
  return g;
}

PoolResult maxpool2_forward(const Tensor& input) {
  detail::check_pool_input(input);
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  PoolResult r{Tensor({C, H / 2, W / 2}), std::vector<std::size_t>(C * (H / 2) * (W / 2))};
  std::size_t o = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < H / 2; ++oy)
      for (std::size_t ox = 0; ox < W / 2; ++ox, ++o) {
        std::size_t best = (c * H + 2 * oy) * W + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * H + 2 * oy + dy) * W + 2 * ox + dx;
            if (input[idx] > input[best]) best = idx;
          }
        r.output[o] = input[best];
        r.argmax[o] = best;
      }
  return r;
}

Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                         const Shape& input_shape) {
  Tensor g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& forward_input) {
  Tensor g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = forward_input[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

Tensor fc_forward(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  detail::check_fc_args(x, weights, bias);
  const std::size_t out_dim = weights.dim(0), in_dim = weights.dim(1);
  Tensor out({out_dim});
  for (std::size_t o = 0; o < out_dim; ++o) {
    double acc = 0.0;
    for (std::size_t i = 0; i < in_dim; ++i) acc += weights[o * in_dim + i] * x[i];
    out[o] = acc + (bias.empty() ? 0.0 : bias[o]);
  }
  return out;
}

FcGrads fc_backward(const Tensor& grad_out, const Tensor& x, const Tensor& weights) {
  detail::check_fc_args(x, weights, Tensor());
  const std::size_t out_dim = weights.dim(0), in_dim = weights.dim(1);
  FcGrads g{Tensor(x.shape()), Tensor({out_dim, in_dim}), Tensor({out_dim})};
  for (std::size_t o = 0; o < out_dim; ++o) {
    g.bias[o] = grad_out[o];
    for (std::size_t i = 0; i < in_dim; ++i) {
      g.weights[o * in_dim + i] = grad_out[o] * x[i];
      g.input[i] += weights[o * in_dim + i] * grad_out[o];
    }
  }
  return g;
}

}  // namespace tcmt::reference
