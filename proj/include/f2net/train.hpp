#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2net/center.hpp"
#include "f2net/data.hpp"
#include "f2net/fusion.hpp"
#include "f2net/metrics.hpp"
#include "f2net/model.hpp"
#include "f2net/optim.hpp"

namespace f2net {

enum class Precision { kFloat, kDouble };
enum class StaticLoss { kFull, kFocalOnly };

struct TrainConfig {
  double lr = 2.5e-4;
  std::size_t batch_size = 4;
  std::size_t epochs = 30;
  std::size_t gt_center_epochs = 20;
  std::size_t static_per_dynamic = 1;  // static iterations per dynamic iteration
  std::uint64_t seed = 0;
  Precision precision = Precision::kDouble;
  StaticLoss static_loss = StaticLoss::kFull;
  double focal_alpha = 2;
  double focal_beta = 4;
  std::size_t val_every = 1;  // epochs between validation passes; 0 disables
  double grad_clip = 0;       // max joint gradient L2 norm per step; 0 disables
  ModelConfig model;

  void validate() const {
    if (batch_size == 0 || static_per_dynamic == 0) throw std::invalid_argument("train: counts must be positive");
    if (epochs > 0 && gt_center_epochs > epochs) {
      throw std::invalid_argument("train: gt_center_epochs (" + std::to_string(gt_center_epochs) +
                                  ") exceeds epochs (" + std::to_string(epochs) + ")");
    }
    if (!(lr >= 0)) throw std::invalid_argument("train: lr must be >= 0");
    if (!(grad_clip >= 0)) throw std::invalid_argument("train: grad_clip must be >= 0");
    model.validate();
  }
};

struct StepLosses {
  double focal = 0;
  double segmentation = 0;
  double total() const { return focal + segmentation; }
};

/// One saliency image with its mask (treated as both reference and current frame).
struct StaticSample {
  const Image* image = nullptr;
  const Mask* mask = nullptr;
};

/// Frame t of a sequence, paired with frame 0 as reference.
struct DynamicSample {
  const SequenceSample* sequence = nullptr;
  std::size_t t = 0;
};

struct TrainHooks {
  // Sees the matching center of every dynamic sample together with the epoch.
  std::function<void(std::size_t epoch, const Point&, CenterSource)> center_probe;
};

inline GridSize quarter_grid(const Image& img) { return {img.height / 4, img.width / 4}; }

namespace detail {

template <typename T>
StepLosses accumulate_sample(const Model<T>& model, const ForwardResult<T>& res, const Mask& mask,
                             const Point& center4, bool with_segmentation, const TrainConfig& cfg,
                             double weight) {
  const GridSize grid4{res.heatmap.dim(0), res.heatmap.dim(1)};
  const auto target = gt_heatmap<T>(center4, grid4, model.config.center.resolve_sigma(grid4));
  const auto lf = focal_loss_logits(res.heatmap_logits, target, cfg.focal_alpha, cfg.focal_beta);
  StepLosses out{static_cast<double>(lf.item()), 0};
  Tensor<T> loss = lf;
  if (with_segmentation) {
    const auto lb = bce_loss_logits(res.mask.values, to_tensor<T>(mask));
    out.segmentation = static_cast<double>(lb.item());
    loss = total_loss(lf, lb);
  }
  backward(scale(loss, static_cast<T>(weight)));
  return out;
}

template <typename T>
void apply_sgd(const Model<T>& model, const TrainConfig& cfg) {
  auto params = model.param_list();
  if (cfg.grad_clip > 0) clip_grad_norm<T>(params, cfg.grad_clip);
  sgd_step<T>(params, static_cast<T>(cfg.lr));
}

}  // namespace detail

/// One SGD step over a batch of still images. Matching is centred on the
/// mask centroid and the heatmap starts from a zero prior.
template <typename T>
StepLosses train_static_step(const Model<T>& model, std::span<const StaticSample> batch, const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("train_static_step: empty batch");
  StepLosses mean;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const auto frame = to_tensor<T>(*s.image);
    const GridSize grid4 = quarter_grid(*s.image);
    const Point c4 = to_grid(mask_centroid(*s.mask), 4, grid4);
    CenterTrack track(grid4);
    ForwardOptions opts;
    opts.center_override = c4;
    opts.update_track = false;
    const auto res = forward(model, frame, frame, zero_prior(frame), track, opts);
    const auto l = detail::accumulate_sample(model, res, *s.mask, c4, cfg.static_loss == StaticLoss::kFull, cfg, w);
    mean.focal += l.focal * w;
    mean.segmentation += l.segmentation * w;
  }
  detail::apply_sgd(model, cfg);
  return mean;
}

/// One SGD step over (frame 0, frame t) pairs. The previous prior and the
/// motion history come from ground truth; matching uses the ground-truth
/// center before cfg.gt_center_epochs and the selected center afterwards.
template <typename T>
StepLosses train_dynamic_step(const Model<T>& model, std::span<const DynamicSample> batch, const TrainConfig& cfg,
                              std::size_t epoch, const TrainHooks& hooks = {}) {
  if (batch.empty()) throw std::invalid_argument("train_dynamic_step: empty batch");
  StepLosses mean;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const auto& seq = *s.sequence;
    if (s.t >= seq.length()) throw std::out_of_range("train_dynamic_step: frame index past sequence end");
    const GridSize grid4 = quarter_grid(seq.frames[0]);
    std::vector<Point> c4;
    for (std::size_t k = 0; k <= s.t; ++k) c4.push_back(to_grid(seq.centers[k], 4, grid4));

    const auto reference = to_tensor<T>(seq.frames[0]);
    const auto current = s.t == 0 ? reference : to_tensor<T>(seq.frames[s.t]);
    const Tensor<T> prior = s.t == 0 ? zero_prior(reference)
                                     : gaussian_bump<T>(c4[s.t - 1], grid4, model.config.center.resolve_sigma(grid4));
    CenterTrack track(grid4);
    for (std::size_t k = 0; k < s.t; ++k) track.push(c4[k]);

    ForwardOptions opts;
    opts.update_track = false;
    if (epoch < cfg.gt_center_epochs) opts.center_override = c4[s.t];
    if (hooks.center_probe) {
      opts.probe = [&](const Point& p, CenterSource src) { hooks.center_probe(epoch, p, src); };
    }
    const auto res = forward(model, reference, current, prior, track, opts);
    const auto l = detail::accumulate_sample(model, res, seq.masks[s.t], c4[s.t], true, cfg, w);
    mean.focal += l.focal * w;
    mean.segmentation += l.segmentation * w;
  }
  detail::apply_sgd(model, cfg);
  return mean;
}

template <typename T>
struct FramePrediction {
  Tensor<T> probability;  // H x W x 1
  Tensor<T> heatmap;      // H/4 x W/4 x 1
  Point center;           // stride-4 cells
  Mask mask;
};

/// Runs a whole sequence with frame 0 as reference, propagating the
/// predicted prior and center track from frame to frame.
template <typename T>
std::vector<FramePrediction<T>> infer_sequence(const Model<T>& model, const std::vector<Image>& frames) {
  std::vector<FramePrediction<T>> out;
  if (frames.empty()) return out;
  const auto reference = to_tensor<T>(frames[0]);
  Tensor<T> prior = zero_prior(reference);
  CenterTrack track(quarter_grid(frames[0]));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto current = t == 0 ? reference : to_tensor<T>(frames[t]);
    const auto res = forward(model, reference, current, prior, track);
    prior = res.next_prior.values;
    out.push_back({res.mask.probability.detach(), res.heatmap.detach(), res.center, binarize(res.mask.probability)});
  }
  return out;
}

/// Mean J over the frames of each sequence, averaged over sequences.
template <typename T>
double validation_j(const Model<T>& model, const std::vector<SequenceSample>& seqs) {
  if (seqs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0;
  for (const auto& s : seqs) {
    const auto preds = infer_sequence(model, s.frames);
    double j = 0;
    for (std::size_t t = 0; t < preds.size(); ++t) j += region_similarity(preds[t].mask, s.masks[t]);
    total += j / static_cast<double>(preds.size());
  }
  return total / static_cast<double>(seqs.size());
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based, completed epochs
  std::string phase;      // "static" or "dynamic"
  double loss_f = 0;
  double loss_b = 0;
  double val_j = std::numeric_limits<double>::quiet_NaN();
};

inline std::string metrics_csv_header() { return "epoch,phase,loss_f,loss_b,val_J\n"; }

inline std::string metrics_csv_row(const EpochLog& e) {
  char buf[160];
  if (std::isnan(e.val_j)) {
    std::snprintf(buf, sizeof(buf), "%zu,%s,%.9g,%.9g,\n", e.epoch, e.phase.c_str(), e.loss_f, e.loss_b);
  } else {
    std::snprintf(buf, sizeof(buf), "%zu,%s,%.9g,%.9g,%.9g\n", e.epoch, e.phase.c_str(), e.loss_f, e.loss_b, e.val_j);
  }
  return buf;
}

/// Every frame of every sequence as a still-image sample.
inline std::vector<StaticSample> static_samples(const std::vector<SequenceSample>& seqs) {
  std::vector<StaticSample> out;
  for (const auto& s : seqs)
    for (std::size_t t = 0; t < s.length(); ++t) out.push_back({&s.frames[t], &s.masks[t]});
  return out;
}

/// Per-epoch generator; depends only on (seed, epoch) so resumed runs draw
/// the same batches as uninterrupted ones.
inline std::mt19937_64 epoch_rng(std::uint64_t seed, std::size_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x46324e54u};
  return std::mt19937_64(seq);
}

/// Alternating static / dynamic training from `start_epoch` to cfg.epochs.
/// on_epoch runs after each epoch with the logged rows (e.g. to checkpoint).
template <typename T>
std::vector<EpochLog> train(const Model<T>& model, const std::vector<StaticSample>& statics,
                            const std::vector<SequenceSample>& videos, const std::vector<SequenceSample>& validation,
                            const TrainConfig& cfg, std::size_t start_epoch = 0,
                            const std::function<void(std::size_t, const std::vector<EpochLog>&)>& on_epoch = {},
                            const TrainHooks& hooks = {}) {
  cfg.validate();
  if (statics.empty() || videos.empty()) throw std::invalid_argument("train: datasets must be non-empty");
  std::vector<EpochLog> log;
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    auto rng = epoch_rng(cfg.seed, epoch);
    std::vector<std::size_t> order(videos.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    StepLosses static_sum, dynamic_sum;
    std::size_t static_steps = 0, dynamic_steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      for (std::size_t r = 0; r < cfg.static_per_dynamic; ++r) {
        std::vector<StaticSample> batch;
        std::uniform_int_distribution<std::size_t> pick(0, statics.size() - 1);
        for (std::size_t b = 0; b < cfg.batch_size; ++b) batch.push_back(statics[pick(rng)]);
        const auto l = train_static_step<T>(model, batch, cfg);
        static_sum.focal += l.focal;
        static_sum.segmentation += l.segmentation;
        ++static_steps;
      }
      std::vector<DynamicSample> batch;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& seq = videos[order[i]];
        const std::size_t last = seq.length() - 1;
        const std::size_t t = last == 0 ? 0 : std::uniform_int_distribution<std::size_t>(1, last)(rng);
        batch.push_back({&seq, t});
      }
      const auto l = train_dynamic_step<T>(model, batch, cfg, epoch, hooks);
      dynamic_sum.focal += l.focal;
      dynamic_sum.segmentation += l.segmentation;
      ++dynamic_steps;
    }

    const bool validate_now =
        !validation.empty() && cfg.val_every > 0 && ((epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.epochs);
    const double val = validate_now ? validation_j(model, validation) : std::numeric_limits<double>::quiet_NaN();
    std::vector<EpochLog> rows{
        {epoch + 1, "static", static_sum.focal / static_cast<double>(static_steps),
         static_sum.segmentation / static_cast<double>(static_steps), val},
        {epoch + 1, "dynamic", dynamic_sum.focal / static_cast<double>(dynamic_steps),
         dynamic_sum.segmentation / static_cast<double>(dynamic_steps), val}};
    log.insert(log.end(), rows.begin(), rows.end());
    if (on_epoch) on_epoch(epoch + 1, rows);
  }
  return log;
}

}  // namespace f2net
