#pragma once

#include <limits>
#include <vector>

#include "ottrim/error.hpp"
#include "ottrim/transport.hpp"

namespace ottrim {

/// Minimum-cost perfect assignment on a square cost matrix (shortest
/// augmenting path with potentials, O(n^3)). Returns the column assigned to
/// each row.
inline std::vector<Index> solve_assignment(const Matrix& cost) {
  const Index n = cost.rows();
  if (cost.cols() != n) throw ShapeError("assignment cost must be square");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based internal arrays; index 0 is the virtual root.
  std::vector<double> row_pot(n + 1, 0.0), col_pot(n + 1, 0.0);
  std::vector<Index> match(n + 1, 0), way(n + 1, 0);
  for (Index r = 1; r <= n; ++r) {
    match[0] = r;
    Index col0 = 0;
    std::vector<double> min_slack(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const Index row0 = match[col0];
      double delta = inf;
      Index col1 = 0;
      for (Index c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double cur = cost(row0 - 1, c - 1) - row_pot[row0] - col_pot[c];
        if (cur < min_slack[c]) {
          min_slack[c] = cur;
          way[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          col1 = c;
        }
      }
      for (Index c = 0; c <= n; ++c) {
        if (used[c]) {
          row_pot[match[c]] += delta;
          col_pot[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const Index col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<Index> row_to_col(n);
  for (Index c = 1; c <= n; ++c) row_to_col[match[c] - 1] = c - 1;
  return row_to_col;
}

inline constexpr Index kExactOracleMaxTokens = 6;

/// Unregularized optimum of the slack-augmented transport problem with
/// marginal [1/N, ..., 1/N, 1] on both sides. Scaled by N the marginals are
/// integral, so the slack node splits into N unit copies and the problem
/// becomes a 2N x 2N assignment. Intended for verification at small N.
inline TransportPlan exact_ot_oracle(const AugmentedCost& cost, const Marginal& marginal) {
  const Index n = cost.n();
  if (n > kExactOracleMaxTokens)
    throw SizeError("exact oracle supports N <= " + std::to_string(kExactOracleMaxTokens) +
                    ", got " + std::to_string(n));
  if (n < 1) throw SizeError("exact oracle needs N >= 1");
  const Marginal expected = Marginal::with_slack(n);
  if (marginal.values.size() != n + 1 || (marginal.values - expected.values).cwiseAbs().maxCoeff() > 1e-12)
    throw DomainError("exact oracle requires the [1/N, ..., 1/N, 1] marginal");

  const Matrix& c = cost.entries;
  Matrix expanded(2 * n, 2 * n);
  for (Index i = 0; i < 2 * n; ++i) {
    const Index src = std::min(i, n);
    for (Index j = 0; j < 2 * n; ++j) expanded(i, j) = c(src, std::min(j, n));
  }
  const auto assignment = solve_assignment(expanded);

  const double unit = 1.0 / static_cast<double>(n);
  TransportPlan plan;
  plan.entries = Matrix::Zero(n + 1, n + 1);
  for (Index i = 0; i < 2 * n; ++i) plan.entries(std::min(i, n), std::min(assignment[i], n)) += unit;
  return plan;
}

}  // namespace ottrim
