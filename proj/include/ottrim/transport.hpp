#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ottrim/config.hpp"
#include "ottrim/error.hpp"
#include "ottrim/types.hpp"

namespace ottrim {

/// Cosine cost between the tokens of two consecutive frames:
/// entry (i, j) = 1 - <prev_i, curr_j>, clamped to [0, 2].
struct CostMatrix {
  Matrix entries;
  Index n() const noexcept { return entries.rows(); }
};

/// Cost matrix extended with the slack node. Row/column N is the dummy:
/// the last column holds c_death, the last row c_birth, the corner 0.
struct AugmentedCost {
  Matrix entries;
  Index n() const noexcept { return entries.rows() - 1; }
};

/// Mass vector [1/N, ..., 1/N, 1]; the trailing entry is the slack capacity.
struct Marginal {
  Vector values;

  static Marginal with_slack(Index n) {
    Marginal m{Vector::Constant(n + 1, 1.0 / static_cast<double>(n))};
    m.values[n] = 1.0;
    return m;
  }
  static Marginal uniform(Index n) { return {Vector::Constant(n, 1.0 / static_cast<double>(n))}; }
};

struct TransportPlan {
  Matrix entries;
  double row_residual = 0.0;     // max_i |sum_j P_ij - a_i| after the closing rescale
  double column_residual = 0.0;  // max_j |sum_i P_ij - a_j|
};

/// Per-target-token evidence from one frame pair. `death` is reported for
/// inspection only and never enters the forensic score.
struct TemporalScores {
  Vector e;
  Vector b;
  Vector death;
};

inline CostMatrix build_cost(const FrameView& prev, const FrameView& curr) {
  if (prev.rows() != curr.rows())
    throw ShapeError("frame token counts differ: " + std::to_string(prev.rows()) + " vs " +
                     std::to_string(curr.rows()));
  if (prev.cols() != curr.cols())
    throw ShapeError("frame embedding dims differ: " + std::to_string(prev.cols()) + " vs " +
                     std::to_string(curr.cols()));
  Matrix c = Matrix::Ones(prev.rows(), curr.rows()) - prev * curr.transpose();
  c = c.cwiseMax(0.0).cwiseMin(2.0);
  return {std::move(c)};
}

inline AugmentedCost augment_cost(const CostMatrix& cost, double c_birth, double c_death) {
  if (!(c_birth >= 0.0) || !(c_death >= 0.0))
    throw DomainError("slack penalties must be nonnegative");
  if (!std::isfinite(c_birth) || !std::isfinite(c_death) || !cost.entries.allFinite())
    throw DomainError("costs must be finite");
  const Index n = cost.n();
  Matrix aug(n + 1, n + 1);
  aug.topLeftCorner(n, n) = cost.entries;
  aug.col(n).head(n).setConstant(c_death);
  aug.row(n).head(n).setConstant(c_birth);
  aug(n, n) = 0.0;
  return {std::move(aug)};
}

namespace detail {

inline double log_sum_exp_max(double max_val, double sum_shifted) {
  return max_val + std::log(sum_shifted);
}

}  // namespace detail

/// Entropic OT between `marginal` and itself on a square cost, in the log
/// domain with zero-initialized potentials. Each sweep updates the column
/// potential, then the row potential. After the last sweep the plan rows are
/// rescaled once so row sums match the marginal; the column residual is what
/// remains.
inline TransportPlan solve_entropic(const Matrix& cost, const Vector& marginal, double epsilon,
                                    int iters) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon_ot must be positive");
  if (iters < 1) throw DomainError("sinkhorn iteration count must be at least 1");
  if (cost.rows() != cost.cols() || cost.rows() != marginal.size())
    throw ShapeError("cost must be square and match the marginal length");
  if (!cost.allFinite()) throw DomainError("cost matrix contains non-finite entries");
  if ((marginal.array() <= 0.0).any()) throw DomainError("marginal entries must be positive");

  const Index n = cost.rows();
  const Matrix log_kernel = -cost / epsilon;
  const Vector log_a = marginal.array().log().matrix();
  // Scaled potentials: u = f / epsilon, v = g / epsilon.
  Vector u = Vector::Zero(n);
  Vector v = Vector::Zero(n);
  Vector col_max(n), col_acc(n);

  for (int it = 0; it < iters; ++it) {
    col_max.setConstant(-std::numeric_limits<double>::infinity());
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) col_max[j] = std::max(col_max[j], u[i] + log_kernel(i, j));
    col_acc.setZero();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) col_acc[j] += std::exp(u[i] + log_kernel(i, j) - col_max[j]);
    for (Index j = 0; j < n; ++j) v[j] = log_a[j] - detail::log_sum_exp_max(col_max[j], col_acc[j]);

    for (Index i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < n; ++j) mx = std::max(mx, v[j] + log_kernel(i, j));
      double acc = 0.0;
      for (Index j = 0; j < n; ++j) acc += std::exp(v[j] + log_kernel(i, j) - mx);
      u[i] = log_a[i] - detail::log_sum_exp_max(mx, acc);
    }
  }

  TransportPlan plan;
  plan.entries.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (Index j = 0; j < n; ++j) {
      plan.entries(i, j) = std::exp(u[i] + v[j] + log_kernel(i, j));
      row_sum += plan.entries(i, j);
    }
    plan.entries.row(i) *= marginal[i] / row_sum;
  }
  for (Index i = 0; i < n; ++i)
    plan.row_residual = std::max(plan.row_residual, std::abs(plan.entries.row(i).sum() - marginal[i]));
  for (Index j = 0; j < n; ++j)
    plan.column_residual =
        std::max(plan.column_residual, std::abs(plan.entries.col(j).sum() - marginal[j]));
  return plan;
}

inline TransportPlan sinkhorn(const AugmentedCost& cost, const Marginal& marginal, double epsilon_ot,
                              int iters) {
  return solve_entropic(cost.entries, marginal.values, epsilon_ot, iters);
}

/// <P, C> over every entry, slack row and column included.
inline double transport_objective(const TransportPlan& plan, const Matrix& cost) {
  if (plan.entries.rows() != cost.rows() || plan.entries.cols() != cost.cols())
    throw ShapeError("plan and cost shapes differ");
  return plan.entries.cwiseProduct(cost).sum();
}

/// e_j = sum_{i<N} P_ij C_ij, b_j = P_{N,j}, death_i = P_{i,N}.
inline TemporalScores temporal_scores(const TransportPlan& plan, const AugmentedCost& cost) {
  if (plan.entries.rows() != cost.entries.rows() || plan.entries.cols() != cost.entries.cols())
    throw ShapeError("plan and cost shapes differ");
  const Index n = cost.n();
  TemporalScores s{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};
  for (Index j = 0; j < n; ++j) {
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) acc += plan.entries(i, j) * cost.entries(i, j);
    s.e[j] = acc;
    s.b[j] = plan.entries(n, j);
    s.death[j] = plan.entries(j, n);
  }
  return s;
}

/// Single-frame novelty: distance of each token to the frame mean.
inline Vector spatial_novelty(const FrameView& frame) {
  const Eigen::RowVectorXd mean = frame.colwise().mean();
  Vector s(frame.rows());
  for (Index j = 0; j < frame.rows(); ++j) s[j] = (frame.row(j) - mean).norm();
  return s;
}

/// Death penalty used by the only_birth ablation; 50x the largest cosine
/// cost, so the death route is never competitive.
inline constexpr double kClosedRouteCost = 100.0;

inline TemporalScores temporal_scores_variant(TransportMode mode, const FrameView& prev,
                                              const FrameView& curr, const RunConfig& config) {
  const CostMatrix cost = build_cost(prev, curr);
  const Index n = cost.n();
  switch (mode) {
    case TransportMode::hard_assignment: {
      TemporalScores s{cost.entries.colwise().minCoeff().transpose(), Vector::Zero(n),
                       Vector::Zero(n)};
      return s;
    }
    case TransportMode::balanced_ot: {
      const auto plan = solve_entropic(cost.entries, Marginal::uniform(n).values, config.epsilon_ot,
                                       config.sinkhorn_iters);
      TemporalScores s{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n)};
      for (Index j = 0; j < n; ++j) {
        double acc = 0.0;
        for (Index i = 0; i < n; ++i) acc += plan.entries(i, j) * cost.entries(i, j);
        s.e[j] = acc;
      }
      return s;
    }
    case TransportMode::only_birth:
    case TransportMode::birth_death: {
      const double c_death = mode == TransportMode::only_birth ? kClosedRouteCost : config.c_death;
      const auto aug = augment_cost(cost, config.c_birth, c_death);
      const auto plan =
          sinkhorn(aug, Marginal::with_slack(n), config.epsilon_ot, config.sinkhorn_iters);
      return temporal_scores(plan, aug);
    }
  }
  throw ConfigError("unknown transport mode");
}

}  // namespace ottrim
