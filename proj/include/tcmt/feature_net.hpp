#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tcmt/kernels.hpp"
#include "tcmt/tensor.hpp"

namespace tcmt {

struct LayerSpec {
  ConvSpec conv;
  bool pool = false;  // 2x2 max-pool after the rectifier

  bool operator==(const LayerSpec&) const = default;
};

enum class InitScale {
  kFanIn,           // N(0,1) scaled by init_gain / sqrt(fan_in)
  kStandardNormal,  // raw N(0,1), scaled by init_gain only
};

/**
 * Shape of the shared feature extractor: conv → relu → [pool] blocks
 * followed by one fully connected layer producing the D-dim feature.
 */
struct NetConfig {
  std::size_t input_side = 60;
  std::size_t input_channels = 1;
  std::vector<LayerSpec> layers;
  std::size_t feature_dim = 100;
  bool fc_relu = true;
  InitScale init_scale = InitScale::kFanIn;
  double init_gain = 1.0;

  /// Four conv layers (20, 48, 64, 80 maps), three pools, one fc layer.
  static NetConfig default_config();

  /// Throws DimensionError if channels do not chain or any spatial size is invalid.
  void validate() const;
  /// Spatial side of each layer's output after optional pooling.
  std::vector<std::size_t> layer_sides() const;
  /// Number of inputs to the fully connected layer.
  std::size_t flat_dim() const;

  /// Canonical key=value text, one pair per line; parse_net_config inverts it.
  std::string to_text() const;

  bool operator==(const NetConfig&) const = default;
};

NetConfig parse_net_config(const std::string& text);
/// "20:5:1:pool,48:5:1:pool" style layer list; input channels chain from `input_channels`.
std::vector<LayerSpec> parse_layer_list(const std::string& text, std::size_t input_channels);
std::string format_layer_list(const std::vector<LayerSpec>& layers);

/// The filter set K: conv kernels and biases per layer plus the fc layer.
/// Also used as the container for gradients with respect to those parameters.
struct FilterBank {
  std::vector<Tensor> kernels;  // [F,C,k,k] per layer
  std::vector<Tensor> biases;   // [F] per layer
  Tensor fc_weights;            // [D, flat]
  Tensor fc_bias;               // [D]

  /// Zero-filled bank with the shapes of `config`.
  static FilterBank zeros(const NetConfig& config);

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  /// Parameters under weight decay (kernels and fc weights, not biases).
  std::vector<const Tensor*> decayed() const;
  std::size_t parameter_count() const;

  /// tr(KKᵀ): sum of squares over the decayed parameters.
  double decay_norm() const;
  void add_scaled(const FilterBank& other, double scale);
  /// Adds scale·K to the decayed parameters of *this, where K comes from `filters`.
  void add_decay_gradient(const FilterBank& filters, double scale);
  bool all_finite() const;
  /// Throws DimensionError unless shapes match `config`.
  void check(const NetConfig& config) const;

  bool operator==(const FilterBank&) const = default;
};

/// Intermediates retained by net_forward for net_backward. Owned by the caller.
struct ActivationCache {
  std::vector<Tensor> inputs;       // layer inputs
  std::vector<Tensor> pre_relu;     // conv outputs
  std::vector<Tensor> post_relu;
  std::vector<std::vector<std::size_t>> argmax;
  Tensor fc_input;
  Tensor fc_pre;
  bool valid = false;
};

FilterBank init_filters(const NetConfig& config, std::uint64_t seed);

Tensor net_forward(const NetConfig& config, const FilterBank& filters, const Tensor& image,
                   ActivationCache& cache);
Tensor net_forward(const NetConfig& config, const FilterBank& filters, const Tensor& image);

/// Gradients of a scalar loss with respect to every filter parameter, given dLoss/dfeature.
FilterBank net_backward(const NetConfig& config, const FilterBank& filters,
                        const ActivationCache& cache, const Tensor& grad_feature);

}  // namespace tcmt
