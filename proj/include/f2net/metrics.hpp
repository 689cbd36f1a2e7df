#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2net/data.hpp"

namespace f2net {

inline void check_same_size(const Mask& a, const Mask& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument(std::string(what) + ": mask sizes differ (" + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width) + ")");
  }
}

/// Intersection over union; 1 when both masks are empty.
inline double region_similarity(const Mask& pred, const Mask& gt) {
  check_same_size(pred, gt, "region_similarity");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    inter += pred.bits[i] && gt.bits[i];
    uni += pred.bits[i] || gt.bits[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Foreground pixels with a 4-neighbour in the background. Pixels outside
/// the image count as background.
inline std::vector<Point> boundary_pixels(const Mask& m) {
  std::vector<Point> out;
  auto fg = [&](long long y, long long x) {
    return y >= 0 && x >= 0 && y < static_cast<long long>(m.height) && x < static_cast<long long>(m.width) &&
           m.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const long long yy = static_cast<long long>(y), xx = static_cast<long long>(x);
      if (!fg(yy - 1, xx) || !fg(yy + 1, xx) || !fg(yy, xx - 1) || !fg(yy, xx + 1))
        out.push_back({static_cast<double>(x), static_cast<double>(y)});
    }
  return out;
}

/// Boundary matching tolerance: 0.8% of the image diagonal, at least 1 px.
inline double default_boundary_tolerance(std::size_t height, std::size_t width) {
  return std::max(1.0, 0.008 * std::hypot(static_cast<double>(height), static_cast<double>(width)));
}

/// Boundary F-measure: precision is the share of predicted boundary pixels
/// within `tol` of a ground-truth boundary pixel, recall the converse.
/// Two empty masks score 1; a negative tol selects the default.
inline double boundary_accuracy(const Mask& pred, const Mask& gt, double tol = -1) {
  check_same_size(pred, gt, "boundary_accuracy");
  if (tol < 0) tol = default_boundary_tolerance(gt.height, gt.width);
  const auto pb = boundary_pixels(pred);
  const auto gb = boundary_pixels(gt);
  if (pb.empty() && gb.empty()) return 1.0;
  if (pb.empty() || gb.empty()) return 0.0;

  auto matched = [tol](const std::vector<Point>& from, const std::vector<Point>& to) {
    std::size_t hits = 0;
    const double tol2 = tol * tol + 1e-12;
    for (const auto& p : from) {
      for (const auto& q : to) {
        const double dx = p.x - q.x, dy = p.y - q.y;
        if (dx * dx + dy * dy <= tol2) {
          ++hits;
          break;
        }
      }
    }
    return static_cast<double>(hits) / static_cast<double>(from.size());
  };
  const double precision = matched(pb, gb);
  const double recall = matched(gb, pb);
  if (precision + recall == 0) return 0.0;
  return 2 * precision * recall / (precision + recall);
}

struct StatSummary {
  double mean = 0;
  double recall = 0;
  double decay = 0;
};

struct StatsConfig {
  double recall_threshold = 0.5;
  // Fraction of frames forming the early and late windows for decay.
  double decay_window = 0.25;
};

/// Mean, recall (share of values above the threshold) and decay (mean of
/// the first window minus mean of the last window) of one sequence.
inline StatSummary summarize(const std::vector<double>& values, const StatsConfig& cfg = {}) {
  if (values.empty()) throw std::invalid_argument("metric_stats: empty sequence");
  StatSummary s;
  const double n = static_cast<double>(values.size());
  for (double v : values) {
    s.mean += v;
    if (v > cfg.recall_threshold) s.recall += 1;
  }
  s.mean /= n;
  s.recall /= n;
  const std::size_t window =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n * cfg.decay_window)));
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < window; ++i) {
    head += values[i];
    tail += values[values.size() - window + i];
  }
  s.decay = (head - tail) / static_cast<double>(window);
  return s;
}

struct SequenceMetrics {
  std::string name;
  std::vector<double> j;
  std::vector<double> f;
  StatSummary j_stats;
  StatSummary f_stats;
};

/// Per-sequence J/F statistics plus their averages over sequences.
struct MetricReport {
  std::vector<SequenceMetrics> sequences;  // sorted by name
  StatSummary j;
  StatSummary f;
};

/// Assembles a report from per-frame J and F values keyed by sequence name.
inline MetricReport metric_stats(const std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>& per_frame,
                                 const StatsConfig& cfg = {}) {
  if (per_frame.empty()) throw std::invalid_argument("metric_stats: no sequences");
  MetricReport r;
  for (const auto& [name, values] : per_frame) {
    SequenceMetrics m{name, values.first, values.second, summarize(values.first, cfg), summarize(values.second, cfg)};
    r.sequences.push_back(std::move(m));
  }
  const double n = static_cast<double>(r.sequences.size());
  for (const auto& m : r.sequences) {
    r.j.mean += m.j_stats.mean / n;
    r.j.recall += m.j_stats.recall / n;
    r.j.decay += m.j_stats.decay / n;
    r.f.mean += m.f_stats.mean / n;
    r.f.recall += m.f_stats.recall / n;
    r.f.decay += m.f_stats.decay / n;
  }
  return r;
}

/// Scores predicted against ground-truth mask sequences.
inline MetricReport evaluate(const std::map<std::string, std::pair<std::vector<Mask>, std::vector<Mask>>>& pred_gt,
                             const StatsConfig& cfg = {}) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> values;
  for (const auto& [name, masks] : pred_gt) {
    const auto& [pred, gt] = masks;
    if (pred.size() != gt.size()) {
      throw std::invalid_argument("evaluate: sequence " + name + " has " + std::to_string(pred.size()) +
                                  " predicted vs " + std::to_string(gt.size()) + " ground-truth frames");
    }
    auto& [j, f] = values[name];
    for (std::size_t t = 0; t < gt.size(); ++t) {
      j.push_back(region_similarity(pred[t], gt[t]));
      f.push_back(boundary_accuracy(pred[t], gt[t]));
    }
  }
  return metric_stats(values, cfg);
}

}  // namespace f2net
