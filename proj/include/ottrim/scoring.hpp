#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ottrim/config.hpp"
#include "ottrim/frequency_prior.hpp"
#include "ottrim/projection.hpp"
#include "ottrim/tensor_io.hpp"
#include "ottrim/transport.hpp"

namespace ottrim {

struct FrameScores {
  Vector e;
  Vector b;
  Vector U;
  Vector s;
  Vector death;
  // True when e holds spatial novelty (first frame, or a single-frame input).
  bool spatial_fallback = false;
};

struct ScoreBundle {
  std::vector<FrameScores> frames;
};

struct FrameSelection {
  Index frame = 0;
  std::vector<Index> kept;  // ascending
  std::vector<double> scores;
};

struct SelectionResult {
  RunConfig config;
  std::optional<GridShape> grid;  // set when frames supplied a prior
  Index tokens_per_frame = 0;
  Index k = 0;
  std::vector<FrameSelection> frames;
  Index tokens_before = 0;
  Index tokens_after = 0;
};

/// s_j = (e_j + lambda * b_j) * (1 + eta * U_j).
inline Vector forensic_score(const Vector& e, const Vector& b, const Vector& U, double lambda_birth,
                             double eta_forensic) {
  if (e.size() != b.size() || e.size() != U.size())
    throw ShapeError("score vectors must have equal length");
  if (!(lambda_birth >= 0.0) || !(eta_forensic >= 0.0))
    throw DomainError("lambda_birth and eta_forensic must be nonnegative");
  return ((e.array() + lambda_birth * b.array()) * (1.0 + eta_forensic * U.array())).matrix();
}

/// K = max(1, floor(ratio * N)).
inline Index retained_count(Index n, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw DomainError("ratio must be in (0,1]");
  if (n < 1) throw SizeError("need at least one token");
  return std::max<Index>(1, static_cast<Index>(std::floor(ratio * static_cast<double>(n))));
}

/// Indices of the K highest scores (ties to the smaller index), ascending.
inline std::vector<Index> select_topk(const Vector& s, double ratio) {
  const Index k = retained_count(s.size(), ratio);
  std::vector<Index> order(static_cast<std::size_t>(s.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
    return s[a] > s[b] || (s[a] == s[b] && a < b);
  });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

namespace detail {

inline GridShape square_grid(Index n) {
  const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n)
    throw SizeError("cannot infer a square patch grid for N=" + std::to_string(n) +
                    "; pass the grid explicitly");
  return {side, side};
}

}  // namespace detail

/// Temporal evidence, spatial prior and fused score for every frame.
inline ScoreBundle score_tokens(const TokenTensor& tokens, std::span<const ImageFrame> frames,
                                const RunConfig& config, const Projector& projector,
                                std::optional<GridShape> grid = std::nullopt) {
  config.validate();
  const Index t_count = tokens.frames();
  const Index n = tokens.tokens_per_frame();
  if (!frames.empty()) {
    if (static_cast<Index>(frames.size()) != t_count)
      throw ShapeError("got " + std::to_string(frames.size()) + " frames for " +
                       std::to_string(t_count) + " token frames");
    if (!grid) grid = detail::square_grid(n);
    if (grid->size() != n)
      throw SizeError("patch grid " + std::to_string(grid->rows) + "x" + std::to_string(grid->cols) +
                      " does not cover N=" + std::to_string(n) + " tokens");
  }

  const NormalizedTokens z = project_normalize(tokens, projector, config.epsilon_norm);
  ScoreBundle bundle;
  bundle.frames.resize(static_cast<std::size_t>(t_count));
  for (Index t = 0; t < t_count; ++t) {
    FrameScores& fs = bundle.frames[static_cast<std::size_t>(t)];
    if (t == 0) {
      fs.e = spatial_novelty(z.frame(0));
      fs.b = Vector::Zero(n);
      fs.death = Vector::Zero(n);
      fs.spatial_fallback = true;
    } else {
      auto ts = temporal_scores_variant(config.transport_mode, z.frame(t - 1), z.frame(t), config);
      fs.e = std::move(ts.e);
      fs.b = std::move(ts.b);
      fs.death = std::move(ts.death);
    }
    if (frames.empty()) {
      fs.U = Vector::Zero(n);
    } else {
      const auto prior =
          prior_variant(config.spatial_operator, frames[static_cast<std::size_t>(t)], *grid);
      fs.U = Eigen::Map<const Vector>(prior.values.data(), n);
    }
    fs.s = forensic_score(fs.e, fs.b, fs.U, config.lambda_birth, config.eta_forensic);
  }
  return bundle;
}

/// Full pipeline: score, then keep the top K patch tokens per frame. The
/// global token of each frame is always kept and counted in the totals.
inline SelectionResult compress(const TokenTensor& tokens, std::span<const ImageFrame> frames,
                                const RunConfig& config, const Projector& projector,
                                std::optional<GridShape> grid, ScoreBundle* bundle_out = nullptr) {
  ScoreBundle bundle = score_tokens(tokens, frames, config, projector, grid);
  const Index t_count = tokens.frames();
  const Index n = tokens.tokens_per_frame();

  SelectionResult result;
  result.config = config;
  if (!frames.empty()) result.grid = grid ? *grid : detail::square_grid(n);
  result.tokens_per_frame = n;
  result.k = retained_count(n, config.ratio);
  for (Index t = 0; t < t_count; ++t) {
    const Vector& s = bundle.frames[static_cast<std::size_t>(t)].s;
    result.frames.push_back({t, select_topk(s, config.ratio), std::vector<double>(s.begin(), s.end())});
  }
  result.tokens_before = t_count * (n + 1);
  result.tokens_after = t_count * (result.k + 1);
  if (bundle_out) *bundle_out = std::move(bundle);
  return result;
}

inline SelectionResult compress(const TokenTensor& tokens, const RunConfig& config,
                                const Projector& projector = {}) {
  return compress(tokens, {}, config, projector, std::nullopt);
}

inline nlohmann::json config_json(const RunConfig& config, const std::optional<GridShape>& grid) {
  nlohmann::json c = config;
  if (grid) {
    c["grid_rows"] = grid->rows;
    c["grid_cols"] = grid->cols;
  }
  return c;
}

inline void to_json(nlohmann::json& j, const SelectionResult& r) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : r.frames) {
    frames.push_back({{"frame", f.frame},
                      {"kept", nlohmann::json(f.kept)},
                      {"scores", nlohmann::json(f.scores)},
                      {"global_kept", true}});
  }
  j = nlohmann::json{{"config", config_json(r.config, r.grid)},
                     {"frames", std::move(frames)},
                     {"tokens_before", r.tokens_before},
                     {"tokens_after", r.tokens_after}};
}

struct ScoreReport {
  RunConfig config;
  std::optional<GridShape> grid;
  ScoreBundle bundle;
};

inline void to_json(nlohmann::json& j, const ScoreReport& r) {
  auto vec = [](const Vector& v) { return nlohmann::json(std::vector<double>(v.begin(), v.end())); };
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t t = 0; t < r.bundle.frames.size(); ++t) {
    const auto& f = r.bundle.frames[t];
    frames.push_back({{"frame", t},
                      {"e", vec(f.e)},
                      {"b", vec(f.b)},
                      {"U", vec(f.U)},
                      {"s", vec(f.s)},
                      {"death", vec(f.death)},
                      {"spatial_fallback", f.spatial_fallback}});
  }
  j = nlohmann::json{{"config", config_json(r.config, r.grid)}, {"frames", std::move(frames)}};
}

}  // namespace ottrim
