#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "f2net/tensor.hpp"

namespace f2net {

/// Compares backward() gradients of a scalar function against central
/// differences (f(x+h) - f(x-h)) / 2h for every coordinate of every input.
/// Returns the largest relative error, using max(|analytic|, |numeric|, 1e-8)
/// as the denominator. Inputs must be leaves with requires_grad set.
template <typename T>
double grad_check(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> inputs, double step) {
  for (auto& in : inputs) in.zero_grad();
  backward(f());
  std::vector<std::vector<T>> analytic;
  for (auto& in : inputs) analytic.emplace_back(in.grad().begin(), in.grad().end());

  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = saved + static_cast<T>(step);
      const double plus = static_cast<double>(f().item());
      values[i] = saved - static_cast<T>(step);
      const double minus = static_cast<double>(f().item());
      values[i] = saved;
      const double numeric = (plus - minus) / (2 * step);
      const double exact = static_cast<double>(analytic[k][i]);
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  for (auto& in : inputs) in.zero_grad();
  return worst;
}

/// Single-input form: f maps the input tensor to a scalar.
template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x, double step) {
  return grad_check<T>([&] { return f(x); }, std::vector<Tensor<T>>{x}, step);
}

}  // namespace f2net
