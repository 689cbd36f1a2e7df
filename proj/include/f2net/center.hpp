#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "f2net/geometry.hpp"
#include "f2net/layers.hpp"
#include "f2net/ops.hpp"

// Center prediction: heatmap estimation at stride 4 from the merged feature
// pyramid and the previous frame's gauss map, followed by candidate
// extraction and motion-based center selection.

namespace f2net {

struct CenterConfig {
  std::size_t top_k = 5;
  std::size_t history = 10;
  std::size_t nms_window = 3;
  // Gauss radius (grid cells) of heatmap targets and of the propagated prior;
  // <= 0 selects max(2, 0.1 * min(grid height, grid width)).
  double sigma_gt = 0;

  void validate() const {
    if (top_k < 1) throw std::invalid_argument("center: top_k must be >= 1");
    if (history < 1) throw std::invalid_argument("center: history must be >= 1");
    if (nms_window % 2 == 0) throw std::invalid_argument("center: nms_window must be odd");
  }

  double resolve_sigma(const GridSize& grid) const {
    if (sigma_gt > 0) return sigma_gt;
    return std::max(2.0, 0.1 * static_cast<double>(std::min(grid.height, grid.width)));
  }
};

enum class CenterStrategy { kMotion, kMaximum };

/// Ordered history of selected centers, one per processed frame.
class CenterTrack {
 public:
  CenterTrack() = default;
  explicit CenterTrack(GridSize grid) : grid_(grid) {}

  void push(const Point& p) {
    if (grid_.width && !inside(grid_, p)) throw std::out_of_range("center track: point outside grid");
    centers_.push_back(p);
  }
  const std::vector<Point>& centers() const { return centers_; }
  std::size_t size() const { return centers_.size(); }
  bool empty() const { return centers_.empty(); }
  const GridSize& grid() const { return grid_; }

 private:
  GridSize grid_{};
  std::vector<Point> centers_;
};

struct Candidate {
  std::size_t x = 0;
  std::size_t y = 0;
  double score = 0;

  Point point() const { return {static_cast<double>(x), static_cast<double>(y)}; }
};

template <typename T>
struct CenterBranchParams {
  ConvLayer<T> project_deep;     // 1x1, stride-8 features -> D
  ConvLayer<T> project_skip;     // 1x1, stride-4 features -> D
  ConvLayer<T> scale_conv;       // 3x3, (D + 1) -> 1
  ConvLayer<T> bias_conv;        // 3x3, (D + 1) -> 1
  ConvLayer<T> semantic_hidden;  // 3x3, D -> D, ReLU
  ConvLayer<T> semantic_out;     // 1x1, D -> 1

  static CenterBranchParams make(ParamInit& init, std::size_t deep_channels,
                                 std::size_t skip_channels, std::size_t width) {
    CenterBranchParams p;
    p.project_deep = ConvLayer<T>::make(init, 1, deep_channels, width, kPointwise, false);
    p.project_skip = ConvLayer<T>::make(init, 1, skip_channels, width, kPointwise, false);
    p.scale_conv = ConvLayer<T>::make(init, 3, width + 1, 1, kSame3x3);
    p.bias_conv = ConvLayer<T>::make(init, 3, width + 1, 1, kSame3x3);
    p.semantic_hidden = ConvLayer<T>::make(init, 3, width, width, kSame3x3);
    p.semantic_out = ConvLayer<T>::make(init, 1, width, 1, kPointwise);
    return p;
  }

  void collect(ParamMap<T>& out, const std::string& prefix) const {
    project_deep.collect(out, prefix + ".project_deep");
    project_skip.collect(out, prefix + ".project_skip");
    scale_conv.collect(out, prefix + ".scale_conv");
    bias_conv.collect(out, prefix + ".bias_conv");
    semantic_hidden.collect(out, prefix + ".semantic_hidden");
    semantic_out.collect(out, prefix + ".semantic_out");
  }
};

/// Merges stride-8 and stride-4 features into U_t at stride 4: the projected
/// deep level is upsampled x2 and added to the projected skip level.
template <typename T>
Tensor<T> upsample_merge(const Tensor<T>& level8, const Tensor<T>& level4,
                         const CenterBranchParams<T>& p) {
  if (!level8.defined() || !level4.defined()) throw std::invalid_argument("upsample_merge: missing pyramid level");
  if (level4.dim(0) != 2 * level8.dim(0) || level4.dim(1) != 2 * level8.dim(1)) {
    throw DimensionError("upsample_merge: stride-4 level " + shape_string(level4.shape()) +
                         " is not twice stride-8 level " + shape_string(level8.shape()));
  }
  return add(bilinear_upsample(p.project_deep(level8), 2), p.project_skip(level4));
}

/// Previous-frame prior modulated by scale and bias maps learned from
/// Concat[U_t, G_prev]: Sigmoid(S) * G_prev + Sigmoid(b).
template <typename T>
Tensor<T> modulate_prior(const Tensor<T>& merged, const Tensor<T>& prev_gauss,
                         const CenterBranchParams<T>& p) {
  if (prev_gauss.rank() != 3 || prev_gauss.dim(2) != 1 || prev_gauss.dim(0) != merged.dim(0) ||
      prev_gauss.dim(1) != merged.dim(1)) {
    throw DimensionError("modulate_prior: prior " + shape_string(prev_gauss.shape()) +
                         " does not match features " + shape_string(merged.shape()));
  }
  const auto joined = concat<T>({merged, prev_gauss}, 2);
  const auto scale_map = p.scale_conv(joined);
  const auto bias_map = p.bias_conv(joined);
  return add(mul(sigmoid(scale_map), prev_gauss), sigmoid(bias_map));
}

/// Current-frame heatmap logits F_t: 3x3 conv + ReLU, then 1x1 conv.
template <typename T>
Tensor<T> semantic_heatmap(const Tensor<T>& merged, const CenterBranchParams<T>& p) {
  return p.semantic_out(relu(p.semantic_hidden(merged)));
}

/// H_t = Sigmoid(G_hat + F_t).
template <typename T>
Tensor<T> heatmap_logits(const Tensor<T>& modulated_prior, const Tensor<T>& semantic) {
  if (modulated_prior.shape() != semantic.shape()) {
    throw DimensionError("combine_heatmap: " + shape_string(modulated_prior.shape()) + " vs " +
                         shape_string(semantic.shape()));
  }
  return add(modulated_prior, semantic);
}

template <typename T>
Tensor<T> combine_heatmap(const Tensor<T>& modulated_prior, const Tensor<T>& semantic) {
  return sigmoid(heatmap_logits(modulated_prior, semantic));
}

/// Windowed local maxima of an h x w x 1 heatmap, best K first. A cell is a
/// maximum when no other cell in its window is larger and no earlier cell in
/// (y, x) order within the window ties it. Ties in score rank by (y, x).
template <typename T>
std::vector<Candidate> topk_nms(const Tensor<T>& heatmap, std::size_t k, std::size_t window = 3) {
  if (window % 2 == 0) throw std::invalid_argument("topk_nms: window must be odd");
  const std::size_t h = heatmap.dim(0), w = heatmap.dim(1);
  const long long r = static_cast<long long>(window / 2);
  const auto v = heatmap.data();
  std::vector<Candidate> peaks;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const T here = v[y * w + x];
      bool is_peak = true;
      for (long long dy = -r; dy <= r && is_peak; ++dy)
        for (long long dx = -r; dx <= r && is_peak; ++dx) {
          const long long yy = static_cast<long long>(y) + dy, xx = static_cast<long long>(x) + dx;
          if ((dy == 0 && dx == 0) || yy < 0 || xx < 0 || yy >= static_cast<long long>(h) ||
              xx >= static_cast<long long>(w))
            continue;
          const T other = v[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (other > here || (other == here && earlier)) is_peak = false;
        }
      if (is_peak) peaks.push_back({x, y, static_cast<double>(here)});
    }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  if (peaks.size() > k) peaks.resize(k);
  return peaks;
}

/// Constant-mean-velocity extrapolation from the last n' = min(n, len - 1)
/// steps of the track; a single entry predicts no motion.
inline Point motion_predict(const CenterTrack& track, std::size_t n) {
  if (track.empty()) throw std::invalid_argument("motion_predict: empty track");
  if (n < 1) throw std::invalid_argument("motion_predict: history must be >= 1");
  const auto& c = track.centers();
  const Point last = c.back();
  const std::size_t steps = std::min(n, c.size() - 1);
  if (steps == 0) return last;
  const Point first = c[c.size() - 1 - steps];
  const double denom = static_cast<double>(steps);
  return {last.x + (last.x - first.x) / denom, last.y + (last.y - first.y) / denom};
}

/// Picks the candidate nearest to the motion prediction (ties: higher score,
/// then (y, x)), or the top-scored one under the maximum strategy.
inline Candidate select_center(const std::vector<Candidate>& candidates, const Point& predicted,
                               CenterStrategy strategy = CenterStrategy::kMotion) {
  if (candidates.empty()) throw std::invalid_argument("select_center: no candidates");
  auto rank = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  };
  if (strategy == CenterStrategy::kMaximum) {
    return *std::min_element(candidates.begin(), candidates.end(), rank);
  }
  return *std::min_element(candidates.begin(), candidates.end(),
                           [&](const Candidate& a, const Candidate& b) {
                             const double da = distance(a.point(), predicted);
                             const double db = distance(b.point(), predicted);
                             if (da != db) return da < db;
                             return rank(a, b);
                           });
}

/// Heatmap target: unit-peak gaussian around the rounded center cell.
template <typename T>
Tensor<T> gt_heatmap(const Point& center, const GridSize& grid, double sigma) {
  return gaussian_bump<T>(center, grid, sigma);
}

/// Penalty-reduced pixelwise focal loss, summed over pixels and returned
/// with a positive sign:
///   -(1 - H)^a log H                        where target == 1
///   -(1 - target)^b H^a log(1 - H)          elsewhere
/// H is clamped to [eps, 1 - eps]; clamped pixels pass no gradient.
template <typename T>
Tensor<T> focal_loss(const Tensor<T>& heatmap, const Tensor<T>& target, double alpha = 2,
                     double beta = 4, double eps = 1e-6) {
  if (heatmap.shape() != target.shape()) {
    throw DimensionError("focal_loss: " + shape_string(heatmap.shape()) + " vs " +
                         shape_string(target.shape()));
  }
  const auto H = heatmap.data();
  const auto G = target.data();
  const T a = static_cast<T>(alpha), b = static_cast<T>(beta);
  const T lo = static_cast<T>(eps), hi = T(1) - static_cast<T>(eps);
  T total = 0;
  for (std::size_t i = 0; i < H.size(); ++i) {
    const T h = std::clamp(H[i], lo, hi);
    if (G[i] == T(1)) {
      total -= std::pow(T(1) - h, a) * std::log(h);
    } else {
      total -= std::pow(T(1) - G[i], b) * std::pow(h, a) * std::log(T(1) - h);
    }
  }
  return detail::make_result<T>({1}, {total}, {&heatmap}, [heatmap, target, a, b, lo, hi](const auto& self) {
    auto& gh = *detail::grad_of(heatmap);
    const auto H = heatmap.data();
    const auto G = target.data();
    const T g = self.grad[0];
    for (std::size_t i = 0; i < H.size(); ++i) {
      if (H[i] < lo || H[i] > hi) continue;
      const T h = H[i];
      T d;
      if (G[i] == T(1)) {
        d = a * std::pow(T(1) - h, a - 1) * std::log(h) - std::pow(T(1) - h, a) / h;
      } else {
        const T w = std::pow(T(1) - G[i], b);
        d = -w * (a * std::pow(h, a - 1) * std::log(T(1) - h) - std::pow(h, a) / (T(1) - h));
      }
      gh[i] += g * d;
    }
  });
}

/// focal_loss(sigmoid(logits), ...) with the gradient taken in logit space,
/// so saturated cells still receive a bounded gradient.
template <typename T>
Tensor<T> focal_loss_logits(const Tensor<T>& logits, const Tensor<T>& target, double alpha = 2,
                            double beta = 4, double eps = 1e-6) {
  if (logits.shape() != target.shape()) {
    throw DimensionError("focal_loss: " + shape_string(logits.shape()) + " vs " + shape_string(target.shape()));
  }
  const auto Z = logits.data();
  const auto G = target.data();
  const T a = static_cast<T>(alpha), b = static_cast<T>(beta);
  const T lo = static_cast<T>(eps), hi = T(1) - static_cast<T>(eps);
  std::vector<T> prob(Z.size());
  T total = 0;
  for (std::size_t i = 0; i < Z.size(); ++i) {
    prob[i] = T(1) / (T(1) + std::exp(-Z[i]));
    const T h = std::clamp(prob[i], lo, hi);
    if (G[i] == T(1)) {
      total -= std::pow(T(1) - h, a) * std::log(h);
    } else {
      total -= std::pow(T(1) - G[i], b) * std::pow(h, a) * std::log(T(1) - h);
    }
  }
  return detail::make_result<T>(
      {1}, {total}, {&logits}, [logits, target, prob = std::move(prob), a, b, lo, hi](const auto& self) {
        auto& gz = *detail::grad_of(logits);
        const auto G = target.data();
        const T g = self.grad[0];
        for (std::size_t i = 0; i < prob.size(); ++i) {
          const T h = prob[i];
          const T hc = std::clamp(h, lo, hi);
          T d;
          if (G[i] == T(1)) {
            d = std::pow(T(1) - h, a) * (a * h * std::log(hc) - (T(1) - h));
          } else {
            d = std::pow(T(1) - G[i], b) * std::pow(h, a) * (h - a * (T(1) - h) * std::log(T(1) - hc));
          }
          gz[i] += g * d;
        }
      });
}

}  // namespace f2net
