#pragma once

#include <cmath>
#include <span>

#include "f2net/tensor.hpp"

namespace f2net {

/// Plain SGD: p <- p - lr * g, then the gradients are zeroed.
template <typename T>
void sgd_step(std::span<Tensor<T>> params, T lr) {
  for (auto& p : params) {
    if (!p.has_grad()) throw GraphError("sgd_step: parameter " + shape_string(p.shape()) + " has no gradient");
  }
  for (auto& p : params) {
    auto data = p.mutable_data();
    auto grad = p.mutable_grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * grad[i];
    p.zero_grad();
  }
}

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before rescaling.
template <typename T>
double clip_grad_norm(std::span<Tensor<T>> params, double max_norm) {
  double sq = 0;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace f2net
