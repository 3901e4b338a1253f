#pragma once

// Forward/backward kernels for the convolutional feature stack.
//
// These are the OpenMP-parallel versions used for training. Each output
// channel (or output row block) is computed by exactly one thread in a fixed
// summation order, so results do not depend on the thread count. The serial
// versions in reference_kernels.hpp compute the same quantities with plain
// loops and are kept as the testing oracle.

#include <cstddef>
#include <vector>

#include "tcmt/tensor.hpp"

namespace tcmt {

/// Square-kernel valid convolution (cross-correlation), no padding.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;

  /// Throws DimensionError unless kernel_size, stride and channel counts are positive.
  void validate() const;
  /// Output side for an input side, or throws DimensionError if the window does not tile exactly.
  std::size_t output_side(std::size_t input_side, const char* axis = "height") const;

  bool operator==(const ConvSpec&) const = default;
};

struct ConvGrads {
  Tensor input;    // [C,H,W]
  Tensor kernels;  // [F,C,k,k]
  Tensor bias;     // [F]
};

struct PoolResult {
  Tensor output;                     // [C,H/2,W/2]
  std::vector<std::size_t> argmax;   // flat input index per output cell
};

struct FcGrads {
  Tensor input;    // [D_in]
  Tensor weights;  // [D_out,D_in]
  Tensor bias;     // [D_out]
};

namespace kernels {

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const ConvSpec& spec);
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      const ConvSpec& spec);
/// With need_input_grad = false, ConvGrads::input is left zero-filled.
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& kernels,
                          const ConvSpec& spec, bool need_input_grad = true);

/// 2x2 non-overlapping max pooling; ties go to the first element in row-major order.
PoolResult maxpool2_forward(const Tensor& input);
Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::size_t>& argmax,
                         const Shape& input_shape);

Tensor relu_forward(const Tensor& input);
/// Passes gradient where the forward input was strictly positive.
Tensor relu_backward(const Tensor& grad_out, const Tensor& forward_input);

Tensor fc_forward(const Tensor& x, const Tensor& weights, const Tensor& bias);
FcGrads fc_backward(const Tensor& grad_out, const Tensor& x, const Tensor& weights);

}  // namespace kernels

namespace detail {
// Shape checks shared by the parallel and reference kernels.
void check_conv_args(const Tensor& input, const Tensor& kernels, const ConvSpec& spec);
void check_pool_input(const Tensor& input);
void check_fc_args(const Tensor& x, const Tensor& weights, const Tensor& bias);
}  // namespace detail

}  // namespace tcmt
