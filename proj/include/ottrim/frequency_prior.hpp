#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ottrim/config.hpp"
#include "ottrim/error.hpp"
#include "ottrim/tensor_io.hpp"

namespace ottrim {

/// Absolute (or magnitude) filter response, same size as the source frame.
struct ResponseMap {
  Index height = 0;
  Index width = 0;
  std::vector<double> values;

  double at(Index y, Index x) const { return values[static_cast<std::size_t>(y * width + x)]; }
};

struct GridShape {
  Index rows = 0;
  Index cols = 0;
  Index size() const noexcept { return rows * cols; }
};

/// Per-patch prior in [0,1], row-major over the patch grid.
struct PatchPrior {
  GridShape grid;
  std::vector<double> values;
};

using Kernel3 = std::array<std::array<double, 3>, 3>;

// 4-neighbour stencil. Swap in {{1,1,1},{1,-8,1},{1,1,1}} for the 8-neighbour form.
inline constexpr Kernel3 kLaplacianKernel = {{{0, 1, 0}, {1, -4, 1}, {0, 1, 0}}};
inline constexpr Kernel3 kSobelX = {{{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}}};
inline constexpr Kernel3 kSobelY = {{{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}}};

namespace detail {

// 3x3 correlation with replicate border padding.
inline std::vector<double> filter3(const ImageFrame& frame, const Kernel3& k) {
  const Index h = frame.height(), w = frame.width();
  std::vector<double> out(static_cast<std::size_t>(h * w));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const Index yy = std::clamp<Index>(y + dy, 0, h - 1);
        for (int dx = -1; dx <= 1; ++dx) {
          const Index xx = std::clamp<Index>(x + dx, 0, w - 1);
          acc += k[dy + 1][dx + 1] * frame.at(yy, xx);
        }
      }
      out[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  return out;
}

inline void check_frame(const ImageFrame& frame) {
  if (frame.height() < 3 || frame.width() < 3) throw SizeError("frame must be at least 3x3");
}

// Row/column extent of block `b` out of `blocks` along an axis of length
// `len`; the last block absorbs the remainder.
inline std::pair<Index, Index> block_range(Index b, Index blocks, Index len) {
  const Index step = len / blocks;
  return {b * step, b + 1 == blocks ? len : (b + 1) * step};
}

inline void normalize_by_max(std::vector<double>& v) {
  const double mx = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  if (mx > 0.0)
    for (double& x : v) x /= mx;
}

inline void check_grid(GridShape grid, Index height, Index width) {
  if (grid.rows < 1 || grid.cols < 1) throw SizeError("patch grid dimensions must be >= 1");
  if (grid.rows > height || grid.cols > width)
    throw SizeError("patch grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                    " exceeds image " + std::to_string(height) + "x" + std::to_string(width));
}

}  // namespace detail

inline ResponseMap laplacian_response(const ImageFrame& frame) {
  detail::check_frame(frame);
  ResponseMap map{frame.height(), frame.width(), detail::filter3(frame, kLaplacianKernel)};
  for (double& v : map.values) v = std::abs(v);
  return map;
}

inline ResponseMap sobel_response(const ImageFrame& frame) {
  detail::check_frame(frame);
  const auto gx = detail::filter3(frame, kSobelX);
  const auto gy = detail::filter3(frame, kSobelY);
  ResponseMap map{frame.height(), frame.width(), std::vector<double>(gx.size())};
  for (std::size_t i = 0; i < gx.size(); ++i) map.values[i] = std::hypot(gx[i], gy[i]);
  return map;
}

/// Average-pools the map onto the patch grid, then divides by the grid max.
/// An all-zero map yields an all-zero prior.
inline PatchPrior pool_prior(const ResponseMap& map, GridShape grid) {
  detail::check_grid(grid, map.height, map.width);
  PatchPrior prior{grid, std::vector<double>(static_cast<std::size_t>(grid.size()), 0.0)};
  for (Index r = 0; r < grid.rows; ++r) {
    const auto [y0, y1] = detail::block_range(r, grid.rows, map.height);
    for (Index c = 0; c < grid.cols; ++c) {
      const auto [x0, x1] = detail::block_range(c, grid.cols, map.width);
      double acc = 0.0;
      for (Index y = y0; y < y1; ++y)
        for (Index x = x0; x < x1; ++x) acc += map.at(y, x);
      prior.values[static_cast<std::size_t>(r * grid.cols + c)] =
          acc / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  detail::normalize_by_max(prior.values);
  return prior;
}

/// Population variance of the raw intensities inside each block. Grayscale
/// stand-in for a per-patch colour variance.
inline PatchPrior patch_variance_prior(const ImageFrame& frame, GridShape grid) {
  detail::check_grid(grid, frame.height(), frame.width());
  PatchPrior prior{grid, std::vector<double>(static_cast<std::size_t>(grid.size()), 0.0)};
  for (Index r = 0; r < grid.rows; ++r) {
    const auto [y0, y1] = detail::block_range(r, grid.rows, frame.height());
    for (Index c = 0; c < grid.cols; ++c) {
      const auto [x0, x1] = detail::block_range(c, grid.cols, frame.width());
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      double mean = 0.0;
      for (Index y = y0; y < y1; ++y)
        for (Index x = x0; x < x1; ++x) mean += frame.at(y, x);
      mean /= count;
      double var = 0.0;
      for (Index y = y0; y < y1; ++y)
        for (Index x = x0; x < x1; ++x) var += (frame.at(y, x) - mean) * (frame.at(y, x) - mean);
      prior.values[static_cast<std::size_t>(r * grid.cols + c)] = var / count;
    }
  }
  detail::normalize_by_max(prior.values);
  return prior;
}

inline PatchPrior zero_prior(GridShape grid) {
  return {grid, std::vector<double>(static_cast<std::size_t>(grid.size()), 0.0)};
}

inline PatchPrior prior_variant(SpatialOperator op, const ImageFrame& frame, GridShape grid) {
  switch (op) {
    case SpatialOperator::none:
      detail::check_grid(grid, frame.height(), frame.width());
      return zero_prior(grid);
    case SpatialOperator::patch_variance:
      return patch_variance_prior(frame, grid);
    case SpatialOperator::sobel:
      return pool_prior(sobel_response(frame), grid);
    case SpatialOperator::laplacian:
      return pool_prior(laplacian_response(frame), grid);
  }
  throw ConfigError("unknown spatial operator");
}

inline void to_json(nlohmann::json& j, const PatchPrior& p) {
  j = nlohmann::json{{"grid_rows", p.grid.rows}, {"grid_cols", p.grid.cols}, {"prior", p.values}};
}

}  // namespace ottrim
