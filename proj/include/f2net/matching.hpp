#pragma once

#include <cmath>
#include <stdexcept>

#include "f2net/geometry.hpp"
#include "f2net/ops.hpp"

namespace f2net {

/// Single-channel spatial prior with its peak at `center`.
template <typename T>
struct GaussMap {
  Tensor<T> values;  // h x w x 1
  std::size_t stride = 8;
  Point center;
  double sigma = 0;
};

/// Default prior radius at the matching stride: 0.15 * min(h, w) cells.
inline double default_matching_sigma(const GridSize& grid) {
  return 0.15 * static_cast<double>(std::min(grid.height, grid.width));
}

template <typename T>
GaussMap<T> gauss_map(const Point& center, const GridSize& grid, double sigma, std::size_t stride = 8) {
  return {gaussian_bump<T>(center, grid, sigma), stride, round_to_cell(grid, center), sigma};
}

/// Prior of all ones: turns guided matching into plain non-local matching.
template <typename T>
GaussMap<T> uniform_gauss_map(const GridSize& grid, std::size_t stride = 8) {
  return {Tensor<T>::full({grid.height, grid.width, 1}, T(1)), stride, {}, 0};
}

/// The three information flows entering fusion.
template <typename T>
struct MatchFlows {
  Tensor<T> original;
  Tensor<T> intra;
  Tensor<T> inter;
};

/// Row-wise Softmax((1/sqrt(C)) * query * (keys * prior)^T) for N x C
/// embeddings and an N x 1 prior weighting the key side.
template <typename T>
Tensor<T> guided_correlation(const Tensor<T>& query, const Tensor<T>& keys, const Tensor<T>& prior) {
  if (query.rank() != 2 || keys.shape() != query.shape() || prior.rank() != 2 ||
      prior.dim(0) != keys.dim(0) || prior.dim(1) != 1) {
    throw DimensionError("guided_correlation: query " + shape_string(query.shape()) + ", keys " +
                         shape_string(keys.shape()) + ", prior " + shape_string(prior.shape()));
  }
  const std::size_t n = keys.dim(0), c = keys.dim(1);
  const auto weighted = reshape(mul_map(reshape(keys, {n, 1, c}), reshape(prior, {n, 1, 1})), {n, c});
  const T inv_sqrt_c = T(1) / std::sqrt(static_cast<T>(c));
  return softmax(scale(matmul(query, transpose(weighted)), inv_sqrt_c), 1);
}

/// Reconstructs every position as an affinity-weighted sum of `values` rows.
template <typename T>
Tensor<T> diffuse(const Tensor<T>& affinity, const Tensor<T>& values) {
  if (affinity.rank() != 2 || affinity.dim(0) != affinity.dim(1) || values.rank() != 2 ||
      values.dim(0) != affinity.dim(1)) {
    throw DimensionError("diffuse: affinity " + shape_string(affinity.shape()) + " vs values " +
                         shape_string(values.shape()));
  }
  return matmul(affinity, values);
}

/// Intra-frame (current vs current) and inter-frame (reference vs current)
/// matching with the prior applied to the current-frame keys. Inputs are
/// h x w x C at stride 8; flows come back in the same shape.
template <typename T>
MatchFlows<T> run_matching(const Tensor<T>& reference, const Tensor<T>& current, const GaussMap<T>& prior) {
  if (reference.shape() != current.shape() || current.rank() != 3) {
    throw DimensionError("run_matching: reference " + shape_string(reference.shape()) +
                         " vs current " + shape_string(current.shape()));
  }
  const std::size_t h = current.dim(0), w = current.dim(1), c = current.dim(2);
  if (prior.values.shape() != Shape{h, w, 1}) {
    throw DimensionError("run_matching: prior " + shape_string(prior.values.shape()) +
                         " does not cover " + shape_string(current.shape()));
  }
  const std::size_t n = h * w;
  const auto cur = reshape(current, {n, c});
  const auto ref = reshape(reference, {n, c});
  const auto g = reshape(prior.values, {n, 1});
  const auto intra = diffuse(guided_correlation(cur, cur, g), cur);
  const auto inter = diffuse(guided_correlation(ref, cur, g), cur);
  return {current, reshape(intra, {h, w, c}), reshape(inter, {h, w, c})};
}

/// Guided matching around `center` (stride-8 grid cells).
template <typename T>
MatchFlows<T> run_matching(const Tensor<T>& reference, const Tensor<T>& current, const Point& center,
                           double sigma) {
  const GridSize grid{current.dim(0), current.dim(1)};
  return run_matching(reference, current, gauss_map<T>(center, grid, sigma));
}

/// Plain non-local matching with no spatial prior.
template <typename T>
MatchFlows<T> nonlocal_matching(const Tensor<T>& reference, const Tensor<T>& current) {
  if (reference.shape() != current.shape() || current.rank() != 3) {
    throw DimensionError("nonlocal_matching: reference " + shape_string(reference.shape()) +
                         " vs current " + shape_string(current.shape()));
  }
  const std::size_t h = current.dim(0), w = current.dim(1), c = current.dim(2);
  const auto cur = reshape(current, {h * w, c});
  const auto ref = reshape(reference, {h * w, c});
  const T inv_sqrt_c = T(1) / std::sqrt(static_cast<T>(c));
  const auto keys = transpose(cur);
  const auto intra = matmul(softmax(scale(matmul(cur, keys), inv_sqrt_c), 1), cur);
  const auto inter = matmul(softmax(scale(matmul(ref, keys), inv_sqrt_c), 1), cur);
  return {current, reshape(intra, {h, w, c}), reshape(inter, {h, w, c})};
}

}  // namespace f2net
