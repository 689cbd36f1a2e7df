#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2net/center.hpp"
#include "f2net/fusion.hpp"
#include "f2net/layers.hpp"
#include "f2net/matching.hpp"

namespace f2net {

/// How the current-frame features are matched before fusion.
enum class MatchingMode {
  kNone,      // no matching, decoder sees V_t only
  kUniform,   // non-local matching with a flat prior
  kGuided,    // center-guided matching
};

inline std::string to_string(MatchingMode m) {
  switch (m) {
    case MatchingMode::kNone: return "none";
    case MatchingMode::kUniform: return "uniform";
    case MatchingMode::kGuided: return "guided";
  }
  return "?";
}

inline MatchingMode parse_matching_mode(const std::string& s) {
  if (s == "none") return MatchingMode::kNone;
  if (s == "uniform") return MatchingMode::kUniform;
  if (s == "guided") return MatchingMode::kGuided;
  throw std::invalid_argument("unknown matching mode '" + s + "' (expected none|uniform|guided)");
}

inline std::string to_string(CenterStrategy s) { return s == CenterStrategy::kMotion ? "motion" : "maximum"; }

inline CenterStrategy parse_center_strategy(const std::string& s) {
  if (s == "motion") return CenterStrategy::kMotion;
  if (s == "maximum") return CenterStrategy::kMaximum;
  throw std::invalid_argument("unknown center strategy '" + s + "' (expected motion|maximum)");
}

struct ModelConfig {
  std::size_t stage2_channels = 16;
  std::size_t stage4_channels = 32;
  std::size_t channels = 32;         // C of V_t
  std::size_t center_channels = 64;  // D of U_t
  std::size_t decoder_channels = 32;
  std::size_t reduction = 0;         // guidance FC width; 0 = max(8, C/4)
  MatchingMode matching = MatchingMode::kGuided;
  FusionMode fusion = FusionMode::kChannelSpatial;
  CenterStrategy strategy = CenterStrategy::kMotion;
  CenterConfig center;
  double sigma_match = 0;  // <= 0: 0.15 * min(h, w) at stride 8

  std::size_t resolved_reduction() const { return reduction ? reduction : default_reduction(channels); }

  void validate() const {
    if (!stage2_channels || !stage4_channels || !channels || !center_channels || !decoder_channels) {
      throw std::invalid_argument("model: channel counts must be positive");
    }
    center.validate();
  }

  /// Canonical key = value listing; also the input of digest().
  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "stage2_channels = " << stage2_channels << '\n'
       << "stage4_channels = " << stage4_channels << '\n'
       << "channels = " << channels << '\n'
       << "center_channels = " << center_channels << '\n'
       << "decoder_channels = " << decoder_channels << '\n'
       << "reduction = " << resolved_reduction() << '\n'
       << "matching = " << to_string(matching) << '\n'
       << "fusion = " << to_string(fusion) << '\n'
       << "strategy = " << to_string(strategy) << '\n'
       << "top_k = " << center.top_k << '\n'
       << "history = " << center.history << '\n'
       << "nms_window = " << center.nms_window << '\n'
       << "sigma_gt = " << center.sigma_gt << '\n'
       << "sigma_match = " << sigma_match << '\n';
    return os.str();
  }

  /// FNV-1a over to_text().
  std::uint64_t digest() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : to_text()) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

/// Encoder outputs at strides 2, 4 and 8.
template <typename T>
struct FeaturePyramid {
  Tensor<T> level2;
  Tensor<T> level4;
  Tensor<T> level8;
};

template <typename T>
struct EncoderParams {
  ConvLayer<T> stage2;
  ConvLayer<T> stage4;
  ConvLayer<T> stage8;

  void collect(ParamMap<T>& out, const std::string& prefix) const {
    stage2.collect(out, prefix + ".stage2");
    stage4.collect(out, prefix + ".stage4");
    stage8.collect(out, prefix + ".stage8");
  }
};

/// Three stride-2 conv + ReLU stages. The same parameters encode the
/// reference and the current frame.
template <typename T>
FeaturePyramid<T> toy_encoder(const Tensor<T>& frame, const EncoderParams<T>& p) {
  if (frame.rank() != 3 || frame.dim(0) % 8 != 0 || frame.dim(1) % 8 != 0 || frame.dim(0) == 0 ||
      frame.dim(1) == 0) {
    throw DimensionError("toy_encoder: frame " + shape_string(frame.shape()) +
                         " must be H x W x C with H and W divisible by 8");
  }
  FeaturePyramid<T> out;
  // Pixels in [0, 1] are centred to [-1, 1].
  const auto centred = scale(add(frame, Tensor<T>::full({1, 1, frame.dim(2)}, T(-0.5))), T(2));
  out.level2 = relu(p.stage2(centred));
  out.level4 = relu(p.stage4(out.level2));
  out.level8 = relu(p.stage8(out.level4));
  return out;
}

template <typename T>
struct Model {
  ModelConfig config;
  EncoderParams<T> encoder;
  CenterBranchParams<T> center;
  FusionParams<T> fusion;
  DecoderParams<T> decoder;

  static Model create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamInit init(seed);
    Model m;
    m.config = cfg;
    m.encoder.stage2 = ConvLayer<T>::make(init, 3, 3, cfg.stage2_channels, kDown3x3);
    m.encoder.stage4 = ConvLayer<T>::make(init, 3, cfg.stage2_channels, cfg.stage4_channels, kDown3x3);
    m.encoder.stage8 = ConvLayer<T>::make(init, 3, cfg.stage4_channels, cfg.channels, kDown3x3);
    m.center = CenterBranchParams<T>::make(init, cfg.channels, cfg.stage4_channels, cfg.center_channels);
    m.fusion = FusionParams<T>::make(init, cfg.channels, cfg.resolved_reduction());
    m.decoder = DecoderParams<T>::make(init, cfg.channels, cfg.decoder_channels);
    return m;
  }

  /// Every learnable tensor by stable name. The tensors share storage with
  /// the model.
  ParamMap<T> params() const {
    ParamMap<T> out;
    encoder.collect(out, "encoder");
    center.collect(out, "center");
    fusion.collect(out, "fusion");
    decoder.collect(out, "decoder");
    return out;
  }

  std::vector<Tensor<T>> param_list() const {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : params()) out.push_back(t);
    return out;
  }

  /// Deep copy with independent parameter storage.
  Model clone() const {
    Model m = create(config, 0);
    auto dst = m.params();
    for (const auto& [name, src] : params()) {
      auto values = dst.at(name).mutable_data();
      std::copy(src.data().begin(), src.data().end(), values.begin());
    }
    return m;
  }

  void zero_grad() const {
    for (auto& [name, t] : params()) {
      Tensor<T> handle = t;
      handle.zero_grad();
    }
  }
};

/// Where the matching center came from, reported to ForwardOptions::probe.
enum class CenterSource { kOverride, kMaximum, kMotion };

struct ForwardOptions {
  // Center (stride-4 cells) forced into matching, e.g. the ground truth.
  std::optional<Point> center_override;
  bool update_track = true;
  std::function<void(const Point&, CenterSource)> probe;
};

template <typename T>
struct ForwardResult {
  FeaturePyramid<T> reference;
  FeaturePyramid<T> current;
  Tensor<T> heatmap_logits;     // pre-sigmoid H_t
  Tensor<T> heatmap;            // H_t, stride 4
  std::vector<Candidate> candidates;
  Point center;                 // o_t, stride-4 cells
  GaussMap<T> next_prior;       // G_t at stride 4, prior for the next frame
  MatchFlows<T> flows;          // empty in MatchingMode::kNone
  Tensor<T> fused;
  MaskLogits<T> mask;
};

template <typename T>
Tensor<T> zero_prior(const Tensor<T>& frame) {
  return Tensor<T>::zeros({frame.dim(0) / 4, frame.dim(1) / 4, 1});
}

/// One frame of inference: encode both frames, predict the heatmap, select
/// o_t, match around it, fuse and decode. o_t is appended to `track` unless
/// options.update_track is false.
template <typename T>
ForwardResult<T> forward(const Model<T>& model, const Tensor<T>& reference_frame,
                         const Tensor<T>& current_frame, const Tensor<T>& prev_prior,
                         CenterTrack& track, const ForwardOptions& options = {}) {
  const auto& cfg = model.config;
  if (reference_frame.shape() != current_frame.shape()) {
    throw DimensionError("forward: reference " + shape_string(reference_frame.shape()) + " vs current " +
                         shape_string(current_frame.shape()));
  }
  ForwardResult<T> r;
  r.current = toy_encoder(current_frame, model.encoder);
  r.reference = reference_frame.node() == current_frame.node() ? r.current
                                                                : toy_encoder(reference_frame, model.encoder);

  const auto merged = upsample_merge(r.current.level8, r.current.level4, model.center);
  const auto modulated = modulate_prior(merged, prev_prior, model.center);
  r.heatmap_logits = heatmap_logits(modulated, semantic_heatmap(merged, model.center));
  r.heatmap = sigmoid(r.heatmap_logits);

  const GridSize grid4{r.heatmap.dim(0), r.heatmap.dim(1)};
  r.candidates = topk_nms(r.heatmap, cfg.center.top_k, cfg.center.nms_window);
  CenterSource source;
  if (options.center_override) {
    r.center = round_to_cell(grid4, *options.center_override);
    source = CenterSource::kOverride;
  } else if (cfg.strategy == CenterStrategy::kMaximum || track.empty() || r.candidates.empty()) {
    r.center = r.candidates.empty() ? Point{} : select_center(r.candidates, {}, CenterStrategy::kMaximum).point();
    source = CenterSource::kMaximum;
  } else {
    r.center = select_center(r.candidates, motion_predict(track, cfg.center.history)).point();
    source = CenterSource::kMotion;
  }
  if (options.probe) options.probe(r.center, source);
  r.next_prior = gauss_map<T>(r.center, grid4, cfg.center.resolve_sigma(grid4), 4);

  const auto& v_t = r.current.level8;
  const GridSize grid8{v_t.dim(0), v_t.dim(1)};
  switch (cfg.matching) {
    case MatchingMode::kNone:
      r.fused = v_t;
      break;
    case MatchingMode::kUniform:
      r.flows = run_matching(r.reference.level8, v_t, uniform_gauss_map<T>(grid8));
      r.fused = fuse(r.flows, cfg.fusion, model.fusion);
      break;
    case MatchingMode::kGuided: {
      const double sigma = cfg.sigma_match > 0 ? cfg.sigma_match : default_matching_sigma(grid8);
      r.flows = run_matching(r.reference.level8, v_t, rescale_point(r.center, 4, 8), sigma);
      r.fused = fuse(r.flows, cfg.fusion, model.fusion);
      break;
    }
  }
  r.mask = decode(r.fused, model.decoder);
  if (options.update_track) track.push(r.center);
  return r;
}

}  // namespace f2net
