#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "f2net/tensor.hpp"

namespace f2net {

/// Position in grid-cell units; x is the column, y the row.
struct Point {
  double x = 0;
  double y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct GridSize {
  std::size_t height = 0;
  std::size_t width = 0;
  friend bool operator==(const GridSize&, const GridSize&) = default;
};

inline bool inside(const GridSize& grid, const Point& p) {
  return p.x >= -0.5 && p.y >= -0.5 && p.x < static_cast<double>(grid.width) - 0.5 &&
         p.y < static_cast<double>(grid.height) - 0.5;
}

/// Nearest grid cell of a point known to be inside the grid.
inline Point round_to_cell(const GridSize& grid, const Point& p) {
  const double x = std::clamp(std::round(p.x), 0.0, static_cast<double>(grid.width) - 1);
  const double y = std::clamp(std::round(p.y), 0.0, static_cast<double>(grid.height) - 1);
  return {x, y};
}

/// Maps a point between grids whose cells are `from_stride` and `to_stride`
/// input pixels wide. Cell centres sit at stride * (i + 0.5) - 0.5 in pixels.
inline Point rescale_point(const Point& p, double from_stride, double to_stride) {
  return {((p.x + 0.5) * from_stride) / to_stride - 0.5, ((p.y + 0.5) * from_stride) / to_stride - 0.5};
}

/// Unnormalized gaussian exp(-d^2 / (2 sigma^2)) around the cell nearest to
/// `center`, as an h x w x 1 map. Throws if the centre lies outside the grid.
template <typename T>
Tensor<T> gaussian_bump(const Point& center, const GridSize& grid, double sigma) {
  if (!inside(grid, center)) {
    throw std::out_of_range("gaussian center (" + std::to_string(center.x) + ", " +
                            std::to_string(center.y) + ") outside " + std::to_string(grid.width) +
                            "x" + std::to_string(grid.height) + " grid");
  }
  if (!(sigma > 0)) throw std::invalid_argument("gaussian sigma must be positive");
  const Point c = round_to_cell(grid, center);
  std::vector<T> values(grid.height * grid.width);
  const double denom = 2 * sigma * sigma;
  for (std::size_t y = 0; y < grid.height; ++y)
    for (std::size_t x = 0; x < grid.width; ++x) {
      const double dx = static_cast<double>(x) - c.x;
      const double dy = static_cast<double>(y) - c.y;
      values[y * grid.width + x] = static_cast<T>(std::exp(-(dx * dx + dy * dy) / denom));
    }
  return Tensor<T>::from({grid.height, grid.width, 1}, std::move(values));
}

}  // namespace f2net
