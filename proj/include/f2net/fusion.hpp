#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>

#include "f2net/layers.hpp"
#include "f2net/matching.hpp"
#include "f2net/ops.hpp"

// Dynamic information fusion of the three matching flows, the two-conv
// mask decoder and the segmentation loss.

namespace f2net {

enum class FusionMode { kConcat, kSpatial, kChannel, kSpatialChannel, kChannelSpatial };

inline std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kConcat: return "concat";
    case FusionMode::kSpatial: return "sa";
    case FusionMode::kChannel: return "ca";
    case FusionMode::kSpatialChannel: return "sca";
    case FusionMode::kChannelSpatial: return "csa";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  for (auto m : {FusionMode::kConcat, FusionMode::kSpatial, FusionMode::kChannel,
                 FusionMode::kSpatialChannel, FusionMode::kChannelSpatial}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown fusion mode '" + s + "' (expected concat|sa|ca|sca|csa)");
}

/// Guidance bottleneck width: C / 4, at least 8.
inline std::size_t default_reduction(std::size_t channels) { return std::max<std::size_t>(8, channels / 4); }

template <typename T>
struct FusionParams {
  ConvLayer<T> concat_conv;       // 1x1, 3C -> C
  DenseLayer<T> guidance;         // C -> r, ReLU
  std::array<DenseLayer<T>, 3> gates;  // r -> C each
  ConvLayer<T> spatial_conv;      // 1x1, C -> 3

  static FusionParams make(ParamInit& init, std::size_t channels, std::size_t reduction) {
    FusionParams p;
    p.concat_conv = ConvLayer<T>::make(init, 1, 3 * channels, channels, kPointwise);
    p.guidance = DenseLayer<T>::make(init, channels, reduction);
    for (auto& g : p.gates) g = DenseLayer<T>::make(init, reduction, channels);
    p.spatial_conv = ConvLayer<T>::make(init, 1, channels, 3, kPointwise);
    return p;
  }

  void collect(ParamMap<T>& out, const std::string& prefix) const {
    concat_conv.collect(out, prefix + ".concat_conv");
    guidance.collect(out, prefix + ".guidance");
    for (std::size_t i = 0; i < gates.size(); ++i) gates[i].collect(out, prefix + ".gate" + std::to_string(i));
    spatial_conv.collect(out, prefix + ".spatial_conv");
  }
};

template <typename T>
using FlowSet = std::array<Tensor<T>, 3>;

template <typename T>
FlowSet<T> as_flow_set(const MatchFlows<T>& f) {
  return {f.original, f.intra, f.inter};
}

template <typename T>
void check_flows(const FlowSet<T>& flows) {
  for (const auto& f : flows) {
    if (f.shape() != flows[0].shape() || f.rank() != 3) {
      throw DimensionError("fusion: flow shapes differ: " + shape_string(flows[0].shape()) + " vs " +
                           shape_string(f.shape()));
    }
  }
}

/// V_t + V_intra + V_inter.
template <typename T>
Tensor<T> fuse_sum(const FlowSet<T>& flows) {
  check_flows(flows);
  return add(add(flows[0], flows[1]), flows[2]);
}

template <typename T>
Tensor<T> fuse_sum(const MatchFlows<T>& flows) {
  return fuse_sum(as_flow_set(flows));
}

/// Per-channel gates W_1..W_3 (each 1x1xC) with sum_i W_i^c = 1, from the
/// pooled sum of the flows through a shared guidance FC and three gate FCs.
template <typename T>
FlowSet<T> channel_gates(const FlowSet<T>& flows, const FusionParams<T>& p) {
  const auto squeezed = global_avg_pool(fuse_sum(flows));
  const auto guide = relu(p.guidance(squeezed));
  const auto logits = concat<T>({p.gates[0](guide), p.gates[1](guide), p.gates[2](guide)}, 0);
  const auto weights = softmax(logits, 0);
  return {slice(weights, 0, 0, 1), slice(weights, 0, 1, 2), slice(weights, 0, 2, 3)};
}

/// Flows scaled channel-wise by their gates.
template <typename T>
FlowSet<T> channel_attention(const FlowSet<T>& flows, const FusionParams<T>& p) {
  const auto w = channel_gates(flows, p);
  return {mul(flows[0], w[0]), mul(flows[1], w[1]), mul(flows[2], w[2])};
}

/// Per-pixel weights h x w x 3, softmax across the three channels.
template <typename T>
Tensor<T> spatial_weights(const FlowSet<T>& flows, const FusionParams<T>& p) {
  return softmax(p.spatial_conv(fuse_sum(flows)), 2);
}

/// Flows scaled pixel-wise by their spatial weights.
template <typename T>
FlowSet<T> spatial_gate(const FlowSet<T>& flows, const FusionParams<T>& p) {
  const auto a = spatial_weights(flows, p);
  return {mul_map(flows[0], slice(a, 2, 0, 1)), mul_map(flows[1], slice(a, 2, 1, 2)),
          mul_map(flows[2], slice(a, 2, 2, 3))};
}

/// Weighted per-pixel sum of the flows.
template <typename T>
Tensor<T> spatial_attention(const FlowSet<T>& flows, const FusionParams<T>& p) {
  const auto g = spatial_gate(flows, p);
  return add(add(g[0], g[1]), g[2]);
}

/// Aggregates the flows into one map. Composite modes feed the gated flows of
/// the first attention into the second.
template <typename T>
Tensor<T> fuse(const FlowSet<T>& flows, FusionMode mode, const FusionParams<T>& p) {
  check_flows(flows);
  auto total = [](const FlowSet<T>& f) { return add(add(f[0], f[1]), f[2]); };
  switch (mode) {
    case FusionMode::kConcat:
      return p.concat_conv(concat<T>({flows[0], flows[1], flows[2]}, 2));
    case FusionMode::kSpatial:
      return spatial_attention(flows, p);
    case FusionMode::kChannel:
      return total(channel_attention(flows, p));
    case FusionMode::kSpatialChannel:
      return total(channel_attention(spatial_gate(flows, p), p));
    case FusionMode::kChannelSpatial:
      return total(spatial_gate(channel_attention(flows, p), p));
  }
  throw std::invalid_argument("fuse: unknown mode");
}

template <typename T>
Tensor<T> fuse(const MatchFlows<T>& flows, FusionMode mode, const FusionParams<T>& p) {
  return fuse(as_flow_set(flows), mode, p);
}

template <typename T>
struct DecoderParams {
  ConvLayer<T> hidden;  // 3x3, C -> Cd, ReLU
  ConvLayer<T> out;     // 1x1, Cd -> 1

  static DecoderParams make(ParamInit& init, std::size_t channels, std::size_t width) {
    return {ConvLayer<T>::make(init, 3, channels, width, kSame3x3),
            ConvLayer<T>::make(init, 1, width, 1, kPointwise)};
  }

  void collect(ParamMap<T>& out_map, const std::string& prefix) const {
    hidden.collect(out_map, prefix + ".hidden");
    out.collect(out_map, prefix + ".out");
  }
};

/// Full-resolution mask logits and their sigmoid R_t.
template <typename T>
struct MaskLogits {
  Tensor<T> values;       // H x W x 1, pre-sigmoid
  Tensor<T> probability;  // sigmoid(values)
};

/// Two convolutions at stride 8, bilinear x8 upsampling, sigmoid.
template <typename T>
MaskLogits<T> decode(const Tensor<T>& fused, const DecoderParams<T>& p) {
  const auto logits = bilinear_upsample(p.out(relu(p.hidden(fused))), 8);
  return {logits, sigmoid(logits)};
}

/// Binary cross entropy summed over pixels; R is clamped to [eps, 1 - eps]
/// and clamped pixels pass no gradient.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& prob, const Tensor<T>& target, double eps = 1e-6) {
  if (prob.shape() != target.shape()) {
    throw DimensionError("bce_loss: " + shape_string(prob.shape()) + " vs " + shape_string(target.shape()));
  }
  const T lo = static_cast<T>(eps), hi = T(1) - static_cast<T>(eps);
  const auto R = prob.data();
  const auto G = target.data();
  T total = 0;
  for (std::size_t i = 0; i < R.size(); ++i) {
    const T r = std::clamp(R[i], lo, hi);
    total -= G[i] * std::log(r) + (T(1) - G[i]) * std::log(T(1) - r);
  }
  return detail::make_result<T>({1}, {total}, {&prob}, [prob, target, lo, hi](const auto& self) {
    auto& gr = *detail::grad_of(prob);
    const auto R = prob.data();
    const auto G = target.data();
    for (std::size_t i = 0; i < R.size(); ++i) {
      if (R[i] < lo || R[i] > hi) continue;
      gr[i] += self.grad[0] * (-G[i] / R[i] + (T(1) - G[i]) / (T(1) - R[i]));
    }
  });
}

/// bce_loss(sigmoid(logits), ...) with the gradient taken in logit space
/// (R - target per pixel), which stays informative when R saturates.
template <typename T>
Tensor<T> bce_loss_logits(const Tensor<T>& logits, const Tensor<T>& target, double eps = 1e-6) {
  if (logits.shape() != target.shape()) {
    throw DimensionError("bce_loss: " + shape_string(logits.shape()) + " vs " + shape_string(target.shape()));
  }
  const T lo = static_cast<T>(eps), hi = T(1) - static_cast<T>(eps);
  const auto Z = logits.data();
  const auto G = target.data();
  std::vector<T> prob(Z.size());
  T total = 0;
  for (std::size_t i = 0; i < Z.size(); ++i) {
    prob[i] = T(1) / (T(1) + std::exp(-Z[i]));
    const T r = std::clamp(prob[i], lo, hi);
    total -= G[i] * std::log(r) + (T(1) - G[i]) * std::log(T(1) - r);
  }
  return detail::make_result<T>({1}, {total}, {&logits}, [logits, target, prob = std::move(prob)](const auto& self) {
    auto& gz = *detail::grad_of(logits);
    const auto G = target.data();
    for (std::size_t i = 0; i < prob.size(); ++i) gz[i] += self.grad[0] * (prob[i] - G[i]);
  });
}

/// L = L_f + L_b.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& focal, const Tensor<T>& segmentation) {
  return add(focal, segmentation);
}

}  // namespace f2net
