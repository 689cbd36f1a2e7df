#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "f2net/ops.hpp"

namespace f2net {

/// Named learnable tensors. std::map keeps iteration order stable, which the
/// checkpoint format and the optimizer rely on.
template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

/// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initializer.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  template <typename T>
  Tensor<T> uniform(Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<T> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<T>(dist(rng_));
    return Tensor<T>::from(std::move(shape), std::move(values), true);
  }

 private:
  std::mt19937_64 rng_;
};

/// kh x kw convolution with an optional 1x1xCout bias.
template <typename T>
struct ConvLayer {
  Tensor<T> kernel;
  Tensor<T> bias;
  Conv2dGeometry geometry;

  static ConvLayer make(ParamInit& init, std::size_t k, std::size_t cin, std::size_t cout,
                        Conv2dGeometry geometry, bool with_bias = true) {
    ConvLayer layer;
    layer.kernel = init.uniform<T>({k, k, cin, cout}, k * k * cin);
    if (with_bias) layer.bias = init.uniform<T>({1, 1, cout}, k * k * cin);
    layer.geometry = geometry;
    return layer;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = conv2d(x, kernel, geometry);
    return bias.defined() ? add(y, bias) : y;
  }

  void collect(ParamMap<T>& out, const std::string& name) const {
    out[name + ".kernel"] = kernel;
    if (bias.defined()) out[name + ".bias"] = bias;
  }
};

/// Fully connected layer on 1x1xC vectors.
template <typename T>
struct DenseLayer {
  Tensor<T> weights;
  Tensor<T> bias;

  static DenseLayer make(ParamInit& init, std::size_t cin, std::size_t cout) {
    return {init.uniform<T>({cin, cout}, cin), init.uniform<T>({1, 1, cout}, cin)};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return fully_connected(x, weights, bias); }

  void collect(ParamMap<T>& out, const std::string& name) const {
    out[name + ".weights"] = weights;
    out[name + ".bias"] = bias;
  }
};

inline constexpr Conv2dGeometry kSame3x3{1, 1, 1};
inline constexpr Conv2dGeometry kPointwise{1, 0, 1};
inline constexpr Conv2dGeometry kDown3x3{2, 1, 1};

}  // namespace f2net
