#include "tcmt/feature_net.hpp"

#include <cmath>
#include <random>

#include "tcmt/kv_text.hpp"

namespace tcmt {

NetConfig NetConfig::default_config() {
  NetConfig c;
  c.input_side = 60;
  c.input_channels = 1;
  c.layers = {
      {{1, 20, 5, 1}, true},    // 60 -> 56 -> 28
      {{20, 48, 5, 1}, true},   // 28 -> 24 -> 12
      {{48, 64, 3, 1}, true},   // 12 -> 10 -> 5
      {{64, 80, 2, 1}, false},  // 5 -> 4
  };
  c.feature_dim = 100;
  return c;
}

std::vector<std::size_t> NetConfig::layer_sides() const {
  std::vector<std::size_t> sides;
  std::size_t side = input_side;
  std::size_t channels = input_channels;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.conv.in_channels != channels) {
      throw DimensionError("layer " + std::to_string(i) + " channel axis: expects " +
                           std::to_string(l.conv.in_channels) + " input channels, previous layer gives " +
                           std::to_string(channels));
    }
    side = l.conv.output_side(side);
    if (l.pool) {
      if (side % 2 != 0) {
        throw DimensionError("layer " + std::to_string(i) + " pool: spatial side " +
                             std::to_string(side) + " is odd");
      }
      side /= 2;
    }
    if (side == 0) throw DimensionError("layer " + std::to_string(i) + " reduces spatial size to 0");
    channels = l.conv.out_channels;
    sides.push_back(side);
  }
  return sides;
}

void NetConfig::validate() const {
  if (input_side == 0 || input_channels == 0) throw DimensionError("net input must be non-empty");
  if (feature_dim == 0) throw DimensionError("feature_dim must be positive");
  if (!(init_gain > 0.0)) throw DimensionError("init_gain must be positive");
  layer_sides();
}

std::size_t NetConfig::flat_dim() const {
  const auto sides = layer_sides();
  if (layers.empty()) return input_channels * input_side * input_side;
  return layers.back().conv.out_channels * sides.back() * sides.back();
}

std::string format_layer_list(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ',';
    const auto& l = layers[i];
    out += std::to_string(l.conv.out_channels) + ":" + std::to_string(l.conv.kernel_size) + ":" +
           std::to_string(l.conv.stride) + ":" + (l.pool ? "pool" : "nopool");
  }
  return out;
}

std::vector<LayerSpec> parse_layer_list(const std::string& text, std::size_t input_channels) {
  std::vector<LayerSpec> layers;
  if (trim(text).empty()) return layers;
  std::size_t channels = input_channels;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(trim(item), ':');
    if (parts.size() != 4) {
      throw ConfigError("layer '" + item + "': expected maps:kernel:stride:pool|nopool");
    }
    LayerSpec l;
    l.conv.in_channels = channels;
    l.conv.out_channels = parse_size(parts[0], "layers");
    l.conv.kernel_size = parse_size(parts[1], "layers");
    l.conv.stride = parse_size(parts[2], "layers");
    if (parts[3] == "pool") {
      l.pool = true;
    } else if (parts[3] != "nopool") {
      throw ConfigError("layer '" + item + "': pool flag must be pool or nopool");
    }
    channels = l.conv.out_channels;
    layers.push_back(l);
  }
  return layers;
}

std::string NetConfig::to_text() const {
  KeyValues kv;
  kv.set("input_side", std::to_string(input_side));
  kv.set("input_channels", std::to_string(input_channels));
  kv.set("layers", format_layer_list(layers));
  kv.set("feature_dim", std::to_string(feature_dim));
  kv.set("fc_relu", fc_relu ? "1" : "0");
  kv.set("init_scale", init_scale == InitScale::kFanIn ? "fan_in" : "standard_normal");
  kv.set("init_gain", format_double(init_gain));
  return kv.to_text();
}

NetConfig parse_net_config(const std::string& text) {
  const auto kv = KeyValues::parse(text, "net config");
  NetConfig c;
  c.layers.clear();
  std::string layers;
  for (const auto& [k, v] : kv.entries) {
    if (k == "input_side") c.input_side = parse_size(v, k);
    else if (k == "input_channels") c.input_channels = parse_size(v, k);
    else if (k == "layers") layers = v;
    else if (k == "feature_dim") c.feature_dim = parse_size(v, k);
    else if (k == "fc_relu") c.fc_relu = parse_bool(v, k);
    else if (k == "init_scale") {
      if (v == "fan_in") c.init_scale = InitScale::kFanIn;
      else if (v == "standard_normal") c.init_scale = InitScale::kStandardNormal;
      else throw ConfigError("init_scale must be fan_in or standard_normal, got '" + v + "'");
    } else if (k == "init_gain") c.init_gain = parse_double(v, k);
    else throw ConfigError("unknown net config key '" + k + "'");
  }
  c.layers = parse_layer_list(layers, c.input_channels);
  c.validate();
  return c;
}

FilterBank FilterBank::zeros(const NetConfig& config) {
  config.validate();
  FilterBank b;
  for (const auto& l : config.layers) {
    b.kernels.emplace_back(Shape{l.conv.out_channels, l.conv.in_channels, l.conv.kernel_size,
                                 l.conv.kernel_size});
    b.biases.emplace_back(Shape{l.conv.out_channels});
  }
  b.fc_weights = Tensor({config.feature_dim, config.flat_dim()});
  b.fc_bias = Tensor({config.feature_dim});
  return b;
}

std::vector<Tensor*> FilterBank::parameters() {
  std::vector<Tensor*> p;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    p.push_back(&kernels[i]);
    p.push_back(&biases[i]);
  }
  p.push_back(&fc_weights);
  p.push_back(&fc_bias);
  return p;
}

std::vector<const Tensor*> FilterBank::parameters() const {
  std::vector<const Tensor*> p;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    p.push_back(&kernels[i]);
    p.push_back(&biases[i]);
  }
  p.push_back(&fc_weights);
  p.push_back(&fc_bias);
  return p;
}

std::vector<const Tensor*> FilterBank::decayed() const {
  std::vector<const Tensor*> p;
  for (const auto& k : kernels) p.push_back(&k);
  p.push_back(&fc_weights);
  return p;
}

std::size_t FilterBank::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

double FilterBank::decay_norm() const {
  double s = 0.0;
  for (const Tensor* t : decayed()) s += t->squared_norm();
  return s;
}

void FilterBank::add_scaled(const FilterBank& other, double scale) {
  auto mine = parameters();
  const auto theirs = other.parameters();
  if (mine.size() != theirs.size()) throw DimensionError("filter bank layer count mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) mine[i]->add_scaled(*theirs[i], scale);
}

void FilterBank::add_decay_gradient(const FilterBank& filters, double scale) {
  if (kernels.size() != filters.kernels.size()) throw DimensionError("filter bank layer count mismatch");
  for (std::size_t i = 0; i < kernels.size(); ++i) kernels[i].add_scaled(filters.kernels[i], scale);
  fc_weights.add_scaled(filters.fc_weights, scale);
}

bool FilterBank::all_finite() const {
  for (const Tensor* t : parameters()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

void FilterBank::check(const NetConfig& config) const {
  if (kernels.size() != config.layers.size() || biases.size() != config.layers.size()) {
    throw DimensionError("filter bank has " + std::to_string(kernels.size()) + " conv layers, config has " +
                         std::to_string(config.layers.size()));
  }
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    const auto& c = config.layers[i].conv;
    require_shape(kernels[i], {c.out_channels, c.in_channels, c.kernel_size, c.kernel_size},
                  "layer " + std::to_string(i) + " kernels");
    require_shape(biases[i], {c.out_channels}, "layer " + std::to_string(i) + " bias");
  }
  require_shape(fc_weights, {config.feature_dim, config.flat_dim()}, "fc weights");
  require_shape(fc_bias, {config.feature_dim}, "fc bias");
}

FilterBank init_filters(const NetConfig& config, std::uint64_t seed) {
  FilterBank b = FilterBank::zeros(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Tensor& t, std::size_t fan_in) {
    double scale = config.init_gain;
    if (config.init_scale == InitScale::kFanIn) scale /= std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values()) v = scale * normal(rng);
  };
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& c = config.layers[i].conv;
    fill(b.kernels[i], c.in_channels * c.kernel_size * c.kernel_size);
  }
  fill(b.fc_weights, config.flat_dim());
  return b;
}

Tensor net_forward(const NetConfig& config, const FilterBank& filters, const Tensor& image,
                   ActivationCache& cache) {
  filters.check(config);
  require_shape(image, {config.input_channels, config.input_side, config.input_side}, "net input image");
  cache = ActivationCache{};
  Tensor x = image;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& layer = config.layers[i];
    cache.inputs.push_back(x);
    Tensor z = kernels::conv2d_forward(x, filters.kernels[i], filters.biases[i], layer.conv);
    Tensor a = kernels::relu_forward(z);
    cache.pre_relu.push_back(std::move(z));
    if (layer.pool) {
      PoolResult p = kernels::maxpool2_forward(a);
      cache.argmax.push_back(std::move(p.argmax));
      cache.post_relu.push_back(std::move(a));
      x = std::move(p.output);
    } else {
      cache.argmax.emplace_back();
      cache.post_relu.push_back(a);
      x = std::move(a);
    }
  }
  cache.fc_input = x.reshaped({x.size()});
  cache.fc_pre = kernels::fc_forward(cache.fc_input, filters.fc_weights, filters.fc_bias);
  cache.valid = true;
  return config.fc_relu ? kernels::relu_forward(cache.fc_pre) : cache.fc_pre;
}

Tensor net_forward(const NetConfig& config, const FilterBank& filters, const Tensor& image) {
  ActivationCache cache;
  return net_forward(config, filters, image, cache);
}

FilterBank net_backward(const NetConfig& config, const FilterBank& filters,
                        const ActivationCache& cache, const Tensor& grad_feature) {
  if (!cache.valid || cache.inputs.size() != config.layers.size()) {
    throw DimensionError("activation cache does not come from a forward pass of this network");
  }
  filters.check(config);
  require_shape(grad_feature, {config.feature_dim}, "feature gradient");
  require_shape(cache.fc_pre, {config.feature_dim}, "cached fc pre-activation");

  FilterBank grads = FilterBank::zeros(config);
  const Tensor g_pre = config.fc_relu ? kernels::relu_backward(grad_feature, cache.fc_pre) : grad_feature;
  FcGrads fc = kernels::fc_backward(g_pre, cache.fc_input, filters.fc_weights);
  grads.fc_weights = std::move(fc.weights);
  grads.fc_bias = std::move(fc.bias);

  const std::size_t L = config.layers.size();
  if (L == 0) return grads;
  // Unflatten into the shape the last layer produced.
  Shape last_shape = cache.post_relu.back().shape();
  if (config.layers.back().pool) last_shape = {last_shape[0], last_shape[1] / 2, last_shape[2] / 2};
  Tensor g = fc.input.reshaped(last_shape);
  for (std::size_t i = L; i-- > 0;) {
    const auto& layer = config.layers[i];
    if (layer.pool) g = kernels::maxpool2_backward(g, cache.argmax[i], cache.post_relu[i].shape());
    g = kernels::relu_backward(g, cache.pre_relu[i]);
    // The image gradient is never needed.
    ConvGrads cg =
        kernels::conv2d_backward(g, cache.inputs[i], filters.kernels[i], layer.conv, i > 0);
    grads.kernels[i] = std::move(cg.kernels);
    grads.biases[i] = std::move(cg.bias);
    g = std::move(cg.input);
  }
  return grads;
}

}  // namespace tcmt
