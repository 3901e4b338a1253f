#pragma once

// Serial reference kernels. Straight nested loops that mirror the
// definitions; used by the tests and the benchmark to check the parallel
// kernels in kernels.hpp.

#include "tcmt/kernels.hpp"

namespace tcmt::reference {

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      const ConvSpec& spec);
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& kernels,
                          const ConvSpec& spec);
PoolResult maxpool2_forward(const Tensor& input);
Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                         const Shape& input_shape);
Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& grad_out, const Tensor& forward_input);
Tensor fc_forward(const Tensor& x, const Tensor& weights, const Tensor& bias);
FcGrads fc_backward(const Tensor& grad_out, const Tensor& x, const Tensor& weights);

}  // namespace tcmt::reference
