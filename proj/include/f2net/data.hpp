#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2net/geometry.hpp"
#include "f2net/tensor.hpp"

// Synthetic video sequences: a textured moving ellipse on a textured
// background, with variants that add a look-alike distractor, a sweeping
// occluder, or a gradual appearance change.

namespace f2net {

/// Interleaved float image, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<float> pixels;

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary mask, one byte per pixel holding 0 or 1.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
  friend bool operator==(const Mask&, const Mask&) = default;
};

enum class Scenario { kPlain, kSimilarity, kOcclusion, kAppearanceChange };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kPlain: return "plain";
    case Scenario::kSimilarity: return "similarity";
    case Scenario::kOcclusion: return "occlusion";
    case Scenario::kAppearanceChange: return "appearance-change";
  }
  return "?";
}

inline Scenario parse_scenario(const std::string& s) {
  for (auto v : {Scenario::kPlain, Scenario::kSimilarity, Scenario::kOcclusion, Scenario::kAppearanceChange})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown scenario '" + s + "'");
}

/// Pixel-space centroid of the mask; throws on an empty mask.
inline Point mask_centroid(const Mask& m) {
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.at(y, x)) {
        sx += static_cast<double>(x);
        sy += static_cast<double>(y);
        ++n;
      }
  if (n == 0) throw std::invalid_argument("mask_centroid: empty mask");
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

struct SequenceSample {
  std::string name;
  std::vector<Image> frames;
  std::vector<Mask> masks;
  std::vector<Point> centers;  // mask centroids, input pixels
  Scenario scenario = Scenario::kPlain;
  std::uint64_t seed = 0;

  std::size_t length() const { return frames.size(); }
};

struct SyntheticConfig {
  std::size_t count = 20;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t length = 12;
  std::vector<Scenario> scenarios{Scenario::kPlain, Scenario::kSimilarity, Scenario::kOcclusion,
                                  Scenario::kAppearanceChange};
  double max_speed = 2.5;  // pixels per frame; 0 keeps objects still

  void validate() const {
    if (count == 0 || length == 0) throw std::invalid_argument("synthetic: count and length must be positive");
    if (height < 16 || width < 16) throw std::invalid_argument("synthetic: frames must be at least 16x16");
    if (scenarios.empty()) throw std::invalid_argument("synthetic: no scenarios given");
    if (max_speed < 0) throw std::invalid_argument("synthetic: max_speed must be >= 0");
  }
};

namespace detail {

struct Rgb {
  double r, g, b;
};

inline Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

struct Ellipse {
  double cx, cy, ra, rb, angle;
  double vx, vy;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / ra, v = (-dx * s + dy * c) / rb;
    return u * u + v * v <= 1.0;
  }

  // Stripe texture coordinate along the major axis.
  double along(double x, double y) const {
    return (x - cx) * std::cos(angle) + (y - cy) * std::sin(angle);
  }

  void step(double w, double h) {
    const double margin = std::max(ra, rb);
    cx += vx;
    cy += vy;
    if (cx < margin || cx > w - 1 - margin) {
      vx = -vx;
      cx = std::clamp(cx, margin, w - 1 - margin);
    }
    if (cy < margin || cy > h - 1 - margin) {
      vy = -vy;
      cy = std::clamp(cy, margin, h - 1 - margin);
    }
  }
};

struct Pattern {
  Rgb color;
  double frequency;
  double amplitude;
  double phase;
};

inline Rgb shade(const Pattern& p, double coord) {
  const double k = 1.0 + p.amplitude * std::sin(p.frequency * coord + p.phase);
  return {p.color.r * k, p.color.g * k, p.color.b * k};
}

class SequenceBuilder {
 public:
  SequenceBuilder(const SyntheticConfig& cfg, Scenario scenario, std::uint64_t seed)
      : cfg_(cfg), scenario_(scenario), rng_(seed) {}

  SequenceSample build() {
    const double W = static_cast<double>(cfg_.width), H = static_cast<double>(cfg_.height);
    const double size = std::min(W, H);

    Rgb bg_a = random_color(0.15, 0.55), bg_b = random_color(0.15, 0.55);
    const double bg_fx = uniform(0.05, 0.2), bg_fy = uniform(0.05, 0.2), bg_phase = uniform(0, 6.28);
    std::vector<double> noise(cfg_.height * cfg_.width * 3);
    for (auto& v : noise) v = uniform(-0.05, 0.05);

    Ellipse fg = random_ellipse(size * 0.13, size * 0.2, W, H);
    Pattern fg_look{random_color(0.55, 0.95), uniform(0.6, 1.2), 0.25, uniform(0, 6.28)};
    Pattern fg_late = fg_look;
    if (scenario_ == Scenario::kAppearanceChange) {
      fg_late.color = random_color(0.55, 0.95);
      fg_late.frequency = fg_look.frequency * uniform(1.4, 1.9);
    }

    Ellipse distractor = random_ellipse(size * 0.09, size * 0.13, W, H);
    Pattern distractor_look = fg_look;
    distractor_look.color = mix(fg_look.color, random_color(0.55, 0.95), 0.15);

    const double bar_width = std::max(2.0, std::floor(size * 0.11));
    const double bar_start = uniform(-bar_width, W * 0.2);
    const double bar_end = uniform(W * 0.8, W);

    SequenceSample s;
    s.scenario = scenario_;
    const std::size_t T = cfg_.length;
    for (std::size_t t = 0; t < T; ++t) {
      const double progress = T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 0.0;
      Pattern look = fg_look;
      if (scenario_ == Scenario::kAppearanceChange) {
        look.color = mix(fg_look.color, fg_late.color, progress);
        look.frequency = fg_look.frequency + (fg_late.frequency - fg_look.frequency) * progress;
      }
      const double bar_x = bar_start + (bar_end - bar_start) * progress;

      Image frame{cfg_.height, cfg_.width, 3, std::vector<float>(cfg_.height * cfg_.width * 3)};
      Mask mask(cfg_.height, cfg_.width);
      for (std::size_t y = 0; y < cfg_.height; ++y)
        for (std::size_t x = 0; x < cfg_.width; ++x) {
          const double px = static_cast<double>(x), py = static_cast<double>(y);
          const double wave = 0.5 + 0.5 * std::sin(bg_fx * px + bg_fy * py + bg_phase);
          Rgb c = mix(bg_a, bg_b, wave);
          if (scenario_ == Scenario::kSimilarity && distractor.contains(px, py))
            c = shade(distractor_look, distractor.along(px, py));
          bool object = false;
          if (fg.contains(px, py)) {
            c = shade(look, fg.along(px, py));
            object = true;
          }
          if (scenario_ == Scenario::kOcclusion && px >= bar_x && px < bar_x + bar_width) {
            c = {0.08, 0.08, 0.1};
            object = false;
          }
          const std::size_t base = (y * cfg_.width + x) * 3;
          frame.pixels[base + 0] = clamp01(c.r + noise[base + 0]);
          frame.pixels[base + 1] = clamp01(c.g + noise[base + 1]);
          frame.pixels[base + 2] = clamp01(c.b + noise[base + 2]);
          mask.at(y, x) = object ? 1 : 0;
        }
      if (mask.count() == 0) throw std::logic_error("synthetic: object vanished from frame");
      s.centers.push_back(mask_centroid(mask));
      s.frames.push_back(std::move(frame));
      s.masks.push_back(std::move(mask));
      fg.step(W, H);
      distractor.step(W, H);
    }
    return s;
  }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  Rgb random_color(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }
  static float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

  Ellipse random_ellipse(double rmin, double rmax, double W, double H) {
    Ellipse e;
    e.ra = uniform(rmin, rmax);
    e.rb = uniform(rmin, e.ra);
    e.angle = uniform(0, 3.14159);
    const double margin = e.ra;
    e.cx = uniform(margin, W - 1 - margin);
    e.cy = uniform(margin, H - 1 - margin);
    const double speed = cfg_.max_speed > 0 ? uniform(0.4 * cfg_.max_speed, cfg_.max_speed) : 0.0;
    const double dir = uniform(0, 6.28318);
    e.vx = speed * std::cos(dir);
    e.vy = speed * std::sin(dir);
    return e;
  }

  const SyntheticConfig& cfg_;
  Scenario scenario_;
  std::mt19937_64 rng_;
};

}  // namespace detail

/// Deterministic synthetic suite: sequence i uses scenario i mod |scenarios|
/// and a seed derived from (seed, i).
inline std::vector<SequenceSample> gen_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<SequenceSample> out;
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const Scenario scenario = cfg.scenarios[i % cfg.scenarios.size()];
    const std::uint64_t seq_seed = seed * 1000003ULL + i * 7919ULL + 17;
    auto s = detail::SequenceBuilder(cfg, scenario, seq_seed).build();
    char name[32];
    std::snprintf(name, sizeof(name), "seq%03zu", i);
    s.name = name;
    s.seed = seq_seed;
    out.push_back(std::move(s));
  }
  return out;
}

/// Image as an H x W x C tensor.
template <typename T>
Tensor<T> to_tensor(const Image& img) {
  std::vector<T> v(img.pixels.begin(), img.pixels.end());
  return Tensor<T>::from({img.height, img.width, img.channels}, std::move(v));
}

/// Mask as an H x W x 1 tensor of 0/1 values.
template <typename T>
Tensor<T> to_tensor(const Mask& m) {
  std::vector<T> v(m.bits.begin(), m.bits.end());
  return Tensor<T>::from({m.height, m.width, 1}, std::move(v));
}

/// Thresholds an H x W x 1 probability map at 0.5.
template <typename T>
Mask binarize(const Tensor<T>& prob, double threshold = 0.5) {
  Mask m(prob.dim(0), prob.dim(1));
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = prob[i] > threshold ? 1 : 0;
  return m;
}

/// Pixel-space point to the nearest cell of a stride-`stride` grid.
inline Point to_grid(const Point& pixel, std::size_t stride, const GridSize& grid) {
  return round_to_cell(grid, rescale_point(pixel, 1.0, static_cast<double>(stride)));
}

}  // namespace f2net
