#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "f2net/tensor.hpp"

// Forward operators with their reverse-mode rules. Layout is channel-last
// (H x W x C), row-major. Every reduction accumulates in ascending index
// order so results are bit-reproducible.

namespace f2net {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

inline bool is_channel_vector(const Shape& s) {
  return s.size() == 3 && s[0] == 1 && s[1] == 1;
}

// True when `small` is a 1x1xC tensor that broadcasts over the HxWxC `big`.
inline bool broadcasts_over(const Shape& big, const Shape& small) {
  return big.size() == 3 && is_channel_vector(small) && small[2] == big[2] && big != small;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                  "matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                      shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return detail::make_result<T>({m, n}, std::move(out), {&a, &b}, [a, b, m, k, n](const auto& self) {
    const auto& g = self.grad;
    if (auto* ga = detail::grad_of(a)) {
      const auto B = b.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
          (*ga)[i * k + p] += acc;
        }
    }
    if (auto* gb = detail::grad_of(b)) {
      const auto A = a.data();
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) {
          T acc = 0;
          for (std::size_t i = 0; i < m; ++i) acc += A[i * k + p] * g[i * n + j];
          (*gb)[p * n + j] += acc;
        }
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require(a.rank() == 2, "transpose: expected a matrix, got " + shape_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  const auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return detail::make_result<T>({n, m}, std::move(out), {&a}, [a, m, n](const auto& self) {
    auto& ga = *detail::grad_of(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

/// Same data, new shape. Element count must match.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  detail::require(shape_numel(shape) == a.size(), "reshape: cannot view " +
                                                      shape_string(a.shape()) + " as " +
                                                      shape_string(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  return detail::make_result<T>(std::move(shape), std::move(out), {&a}, [a](const auto& self) {
    auto& ga = *detail::grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto X = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-X[i]));
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [x](const auto& self) {
    auto& gx = *detail::grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T y = self.data[i];
      gx[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto X = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] > T(0) ? X[i] : T(0);
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [x](const auto& self) {
    auto& gx = *detail::grad_of(x);
    const auto X = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (X[i] > T(0)) gx[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.size());
  const auto X = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] * factor;
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [x, factor](const auto& self) {
    auto& gx = *detail::grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * factor;
  });
}

namespace detail {

enum class Binary { kAdd, kMul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Binary kind, const char* name) {
  const bool same = a.shape() == b.shape();
  const bool b_small = !same && broadcasts_over(a.shape(), b.shape());
  const bool a_small = !same && !b_small && broadcasts_over(b.shape(), a.shape());
  require(same || a_small || b_small, std::string(name) + ": incompatible shapes " +
                                          shape_string(a.shape()) + " and " +
                                          shape_string(b.shape()));
  const Tensor<T>& big = a_small ? b : a;
  const std::size_t n = big.size();
  // Channel count of the broadcast operand; 0 when shapes are equal.
  const std::size_t channels = same ? 0 : big.dim(2);
  auto idx_a = [=](std::size_t i) { return a_small ? i % channels : i; };
  auto idx_b = [=](std::size_t i) { return b_small ? i % channels : i; };

  std::vector<T> out(n);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = kind == Binary::kAdd ? A[idx_a(i)] + B[idx_b(i)] : A[idx_a(i)] * B[idx_b(i)];
  }
  return make_result<T>(big.shape(), std::move(out), {&a, &b},
                        [a, b, kind, n, idx_a, idx_b](const auto& self) {
                          const auto& g = self.grad;
                          if (auto* ga = grad_of(a)) {
                            const auto B = b.data();
                            for (std::size_t i = 0; i < n; ++i)
                              (*ga)[idx_a(i)] += kind == Binary::kAdd ? g[i] : g[i] * B[idx_b(i)];
                          }
                          if (auto* gb = grad_of(b)) {
                            const auto A = a.data();
                            for (std::size_t i = 0; i < n; ++i)
                              (*gb)[idx_b(i)] += kind == Binary::kAdd ? g[i] : g[i] * A[idx_a(i)];
                          }
                        });
}

}  // namespace detail

/// Elementwise sum. Equal shapes, or a 1x1xC operand broadcast over HxWxC.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, detail::Binary::kAdd, "add");
}

/// Elementwise product with the same broadcasting rule as add().
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, detail::Binary::kMul, "mul");
}

/// Multiplies every channel of an HxWxC map by a single-channel HxWx1 map.
template <typename T>
Tensor<T> mul_map(const Tensor<T>& x, const Tensor<T>& map) {
  detail::require(x.rank() == 3 && map.rank() == 3 && map.dim(2) == 1 &&
                      map.dim(0) == x.dim(0) && map.dim(1) == x.dim(1),
                  "mul_map: map " + shape_string(map.shape()) + " does not cover " +
                      shape_string(x.shape()));
  const std::size_t pixels = map.size(), c = x.dim(2);
  std::vector<T> out(x.size());
  const auto X = x.data();
  const auto M = map.data();
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t k = 0; k < c; ++k) out[p * c + k] = X[p * c + k] * M[p];
  return detail::make_result<T>(x.shape(), std::move(out), {&x, &map},
                                [x, map, pixels, c](const auto& self) {
                                  const auto& g = self.grad;
                                  if (auto* gx = detail::grad_of(x)) {
                                    const auto M = map.data();
                                    for (std::size_t p = 0; p < pixels; ++p)
                                      for (std::size_t k = 0; k < c; ++k)
                                        (*gx)[p * c + k] += g[p * c + k] * M[p];
                                  }
                                  if (auto* gm = detail::grad_of(map)) {
                                    const auto X = x.data();
                                    for (std::size_t p = 0; p < pixels; ++p) {
                                      T acc = 0;
                                      for (std::size_t k = 0; k < c; ++k)
                                        acc += g[p * c + k] * X[p * c + k];
                                      (*gm)[p] += acc;
                                    }
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Reductions and normalization

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return detail::make_result<T>({1}, {acc}, {&x}, [x](const auto& self) {
    auto& gx = *detail::grad_of(x);
    for (auto& g : gx) g += self.grad[0];
  });
}

/// Numerically stabilized softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  detail::require(axis < x.rank(), "softmax: axis " + std::to_string(axis) + " out of range for " +
                                       shape_string(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);

  std::vector<T> out(x.size());
  const auto X = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, X[base + l * inner]);
      T total = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const T e = std::exp(X[base + l * inner] - mx);
        out[base + l * inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= total;
    }
  return detail::make_result<T>(x.shape(), std::move(out), {&x},
                                [x, outer, inner, len](const auto& self) {
                                  auto& gx = *detail::grad_of(x);
                                  const auto& y = self.data;
                                  const auto& g = self.grad;
                                  for (std::size_t o = 0; o < outer; ++o)
                                    for (std::size_t in = 0; in < inner; ++in) {
                                      const std::size_t base = o * len * inner + in;
                                      T dot = 0;
                                      for (std::size_t l = 0; l < len; ++l)
                                        dot += g[base + l * inner] * y[base + l * inner];
                                      for (std::size_t l = 0; l < len; ++l) {
                                        const std::size_t i = base + l * inner;
                                        gx[i] += y[i] * (g[i] - dot);
                                      }
                                    }
                                });
}

/// Spatial mean per channel: HxWxC -> 1x1xC.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require(x.rank() == 3 && x.dim(0) >= 1 && x.dim(1) >= 1,
                  "global_avg_pool: expected HxWxC, got " + shape_string(x.shape()));
  const std::size_t pixels = x.dim(0) * x.dim(1), c = x.dim(2);
  std::vector<T> out(c, T(0));
  const auto X = x.data();
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t k = 0; k < c; ++k) out[k] += X[p * c + k];
  for (auto& v : out) v /= static_cast<T>(pixels);
  return detail::make_result<T>({1, 1, c}, std::move(out), {&x}, [x, pixels, c](const auto& self) {
    auto& gx = *detail::grad_of(x);
    const T inv = T(1) / static_cast<T>(pixels);
    for (std::size_t p = 0; p < pixels; ++p)
      for (std::size_t k = 0; k < c; ++k) gx[p * c + k] += self.grad[k] * inv;
  });
}

/// Affine map on a 1x1xC vector: weights C x C', bias 1x1xC' (may be undefined).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weights, const Tensor<T>& bias) {
  detail::require(detail::is_channel_vector(x.shape()) && weights.rank() == 2 &&
                      weights.dim(0) == x.dim(2),
                  "fully_connected: input " + shape_string(x.shape()) + " vs weights " +
                      shape_string(weights.shape()));
  const std::size_t cin = weights.dim(0), cout = weights.dim(1);
  detail::require(!bias.defined() || (detail::is_channel_vector(bias.shape()) && bias.dim(2) == cout),
                  "fully_connected: bias " + (bias.defined() ? shape_string(bias.shape()) : "") +
                      " vs weights " + shape_string(weights.shape()));
  std::vector<T> out(cout, T(0));
  const auto X = x.data();
  const auto Wt = weights.data();
  for (std::size_t i = 0; i < cin; ++i)
    for (std::size_t j = 0; j < cout; ++j) out[j] += X[i] * Wt[i * cout + j];
  if (bias.defined())
    for (std::size_t j = 0; j < cout; ++j) out[j] += bias[j];
  return detail::make_result<T>(
      {1, 1, cout}, std::move(out), {&x, &weights, &bias},
      [x, weights, bias, cin, cout](const auto& self) {
        const auto& g = self.grad;
        if (auto* gx = detail::grad_of(x)) {
          const auto Wt = weights.data();
          for (std::size_t i = 0; i < cin; ++i) {
            T acc = 0;
            for (std::size_t j = 0; j < cout; ++j) acc += g[j] * Wt[i * cout + j];
            (*gx)[i] += acc;
          }
        }
        if (auto* gw = detail::grad_of(weights)) {
          const auto X = x.data();
          for (std::size_t i = 0; i < cin; ++i)
            for (std::size_t j = 0; j < cout; ++j) (*gw)[i * cout + j] += X[i] * g[j];
        }
        if (auto* gb = detail::grad_of(bias))
          for (std::size_t j = 0; j < cout; ++j) (*gb)[j] += g[j];
      });
}

// ---------------------------------------------------------------------------
// Structural

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().shape();
  detail::require(axis < first.size(), "concat: axis out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t d = 0; ok && d < first.size(); ++d) ok = d == axis || p.dim(d) == first[d];
    detail::require(ok, "concat: incompatible shapes " + shape_string(first) + " and " +
                            shape_string(p.shape()));
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_len = out_shape[axis];

  std::vector<T> out(shape_numel(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.dim(axis);
    const auto P = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(&P[o * len * inner], len * inner, &out[(o * out_len + offset) * inner]);
    offset += len;
  }
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), parts,
      [parts, offsets, outer, inner, out_len, axis](const auto& self) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          auto* gp = detail::grad_of(parts[k]);
          if (!gp) continue;
          const std::size_t len = parts[k].dim(axis);
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < len * inner; ++i)
              (*gp)[o * len * inner + i] += self.grad[(o * out_len + offsets[k]) * inner + i];
        }
      });
}

/// Keeps indices [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  detail::require(axis < x.rank() && begin < end && end <= x.dim(axis),
                  "slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") invalid on axis " + std::to_string(axis) + " of " +
                      shape_string(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t in_len = x.dim(axis), len = end - begin;
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  std::vector<T> out(outer * len * inner);
  const auto X = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(&X[(o * in_len + begin) * inner], len * inner, &out[o * len * inner]);
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&x},
                                [x, outer, inner, in_len, len, begin](const auto& self) {
                                  auto& gx = *detail::grad_of(x);
                                  for (std::size_t o = 0; o < outer; ++o)
                                    for (std::size_t i = 0; i < len * inner; ++i)
                                      gx[(o * in_len + begin) * inner + i] +=
                                          self.grad[o * len * inner + i];
                                });
}

// ---------------------------------------------------------------------------
// Convolution

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t dilation = 1;
};

/// Output extent of a convolution along one axis; throws on non-positive size.
inline std::size_t conv_output_size(std::size_t in, std::size_t k, const Conv2dGeometry& g) {
  if (g.stride == 0 || g.dilation == 0) throw GeometryError("conv2d: stride and dilation must be >= 1");
  const long long span = static_cast<long long>(in) + 2LL * static_cast<long long>(g.pad) -
                         static_cast<long long>(g.dilation) * (static_cast<long long>(k) - 1) - 1;
  if (k == 0 || span < 0) {
    throw GeometryError("conv2d: kernel " + std::to_string(k) + " with dilation " +
                        std::to_string(g.dilation) + " does not fit input " + std::to_string(in) +
                        " padded by " + std::to_string(g.pad));
  }
  return static_cast<std::size_t>(span) / g.stride + 1;
}

/// Cross-correlation of an HxWxCin input with a kh x kw x Cin x Cout kernel.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Conv2dGeometry& geom = {}) {
  detail::require(x.rank() == 3 && kernel.rank() == 4 && kernel.dim(2) == x.dim(2),
                  "conv2d: input " + shape_string(x.shape()) + " vs kernel " +
                      shape_string(kernel.shape()));
  const std::size_t H = x.dim(0), W = x.dim(1), ci_n = x.dim(2);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), co_n = kernel.dim(3);
  const std::size_t Ho = conv_output_size(H, kh, geom);
  const std::size_t Wo = conv_output_size(W, kw, geom);
  const long long stride = static_cast<long long>(geom.stride);
  const long long pad = static_cast<long long>(geom.pad);
  const long long dil = static_cast<long long>(geom.dilation);

  // Visits (output pixel, kernel tap, input pixel) triples in a fixed order.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox)
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long long iy = static_cast<long long>(oy) * stride - pad + static_cast<long long>(ky) * dil;
          if (iy < 0 || iy >= static_cast<long long>(H)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long long ix = static_cast<long long>(ox) * stride - pad + static_cast<long long>(kx) * dil;
            if (ix < 0 || ix >= static_cast<long long>(W)) continue;
            fn((oy * Wo + ox) * co_n, (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * ci_n,
               (ky * kw + kx) * ci_n * co_n);
          }
        }
  };

  std::vector<T> out(Ho * Wo * co_n, T(0));
  const auto X = x.data();
  const auto K = kernel.data();
  for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) {
    T* acc = &out[o];
    for (std::size_t ci = 0; ci < ci_n; ++ci) {
      const T xv = X[i + ci];
      const T* kp = &K[k + ci * co_n];
      for (std::size_t co = 0; co < co_n; ++co) acc[co] += xv * kp[co];
    }
  });
  return detail::make_result<T>({Ho, Wo, co_n}, std::move(out), {&x, &kernel},
                                [x, kernel, for_each_tap, ci_n, co_n](const auto& self) {
                                  const auto& g = self.grad;
                                  auto* gx = detail::grad_of(x);
                                  auto* gk = detail::grad_of(kernel);
                                  const auto X = x.data();
                                  const auto K = kernel.data();
                                  for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) {
                                    const T* go = &g[o];
                                    for (std::size_t ci = 0; ci < ci_n; ++ci) {
                                      const T* kp = &K[k + ci * co_n];
                                      if (gx) {
                                        T acc = 0;
                                        for (std::size_t co = 0; co < co_n; ++co) acc += go[co] * kp[co];
                                        (*gx)[i + ci] += acc;
                                      }
                                      if (gk) {
                                        const T xv = X[i + ci];
                                        T* gkp = &(*gk)[k + ci * co_n];
                                        for (std::size_t co = 0; co < co_n; ++co) gkp[co] += xv * go[co];
                                      }
                                    }
                                  });
                                });
}

// ---------------------------------------------------------------------------
// Resampling

namespace detail {

struct LinearTap {
  std::size_t lo, hi;
  double w_hi;  // weight of `hi`; `lo` gets 1 - w_hi
};

// Half-pixel-centred source coordinates (align_corners = false).
inline std::vector<LinearTap> upsample_taps(std::size_t in, std::size_t factor) {
  std::vector<LinearTap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0) src = 0;
    std::size_t lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace detail

/// Bilinear upsampling of HxWxC by 2, 4 or 8.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, std::size_t factor) {
  if (factor != 2 && factor != 4 && factor != 8)
    throw std::invalid_argument("bilinear_upsample: unsupported factor " + std::to_string(factor));
  detail::require(x.rank() == 3, "bilinear_upsample: expected HxWxC, got " + shape_string(x.shape()));
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const auto ty = detail::upsample_taps(H, factor);
  const auto tx = detail::upsample_taps(W, factor);
  const std::size_t Ho = ty.size(), Wo = tx.size();
  std::vector<T> out(Ho * Wo * C);
  const auto X = x.data();
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    const T wy = static_cast<T>(ty[oy].w_hi);
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      const T wx = static_cast<T>(tx[ox].w_hi);
      const T* a = &X[(ty[oy].lo * W + tx[ox].lo) * C];
      const T* b = &X[(ty[oy].lo * W + tx[ox].hi) * C];
      const T* c = &X[(ty[oy].hi * W + tx[ox].lo) * C];
      const T* d = &X[(ty[oy].hi * W + tx[ox].hi) * C];
      T* o = &out[(oy * Wo + ox) * C];
      for (std::size_t k = 0; k < C; ++k) {
        const T top = a[k] * (T(1) - wx) + b[k] * wx;
        const T bot = c[k] * (T(1) - wx) + d[k] * wx;
        o[k] = top * (T(1) - wy) + bot * wy;
      }
    }
  }
  return detail::make_result<T>({Ho, Wo, C}, std::move(out), {&x},
                                [x, ty, tx, W, C](const auto& self) {
                                  auto& gx = *detail::grad_of(x);
                                  const std::size_t Wo = tx.size();
                                  for (std::size_t oy = 0; oy < ty.size(); ++oy) {
                                    const T wy = static_cast<T>(ty[oy].w_hi);
                                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                                      const T wx = static_cast<T>(tx[ox].w_hi);
                                      const T* g = &self.grad[(oy * Wo + ox) * C];
                                      T* a = &gx[(ty[oy].lo * W + tx[ox].lo) * C];
                                      T* b = &gx[(ty[oy].lo * W + tx[ox].hi) * C];
                                      T* c = &gx[(ty[oy].hi * W + tx[ox].lo) * C];
                                      T* d = &gx[(ty[oy].hi * W + tx[ox].hi) * C];
                                      for (std::size_t k = 0; k < C; ++k) {
                                        a[k] += g[k] * (T(1) - wx) * (T(1) - wy);
                                        b[k] += g[k] * wx * (T(1) - wy);
                                        c[k] += g[k] * (T(1) - wx) * wy;
                                        d[k] += g[k] * wx * wy;
                                      }
                                    }
                                  }
                                });
}

}  // namespace f2net
