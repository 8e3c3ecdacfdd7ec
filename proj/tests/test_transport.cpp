#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "ottrim/exact_ot.hpp"
#include "ottrim/oracle_check.hpp"
#include "ottrim/projection.hpp"
#include "ottrim/transport.hpp"
#include "test_support.hpp"

using namespace ottrim;
using ottrim::testing::injected_pair;

namespace {

// Exhaustive search over all assignments of the 2N x 2N expansion. Only
// feasible for N <= 3 and kept independent of the Hungarian solver.
double brute_force_objective(const AugmentedCost& cost) {
  const Index n = cost.n();
  std::vector<Index> perm(static_cast<std::size_t>(2 * n));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Index i = 0; i < 2 * n; ++i) total += cost.entries(std::min(i, n), std::min(perm[i], n));
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

AugmentedCost random_instance(std::mt19937_64& gen, Index n) {
  std::uniform_real_distribution<double> u(0.0, 2.0), pen(0.0, 1.0);
  CostMatrix c{Matrix(n, n)};
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) c.entries(i, j) = u(gen);
  return augment_cost(c, pen(gen), pen(gen));
}

Matrix rows_of(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

FrameView view(const Matrix& m) { return m.middleRows(0, m.rows()); }

}  // namespace

TEST(BuildCost, SelfAndOrthogonalDistances) {
  const Matrix basis = Matrix::Identity(3, 3);
  const auto c = build_cost(view(basis), view(basis));
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(c.entries(i, j), i == j ? 0.0 : 1.0);
}

TEST(BuildCost, AntipodalAndFortyFiveDegrees) {
  const Matrix a = rows_of({{1, 0}});
  const Matrix b = rows_of({{-1, 0}});
  EXPECT_DOUBLE_EQ(build_cost(view(a), view(b)).entries(0, 0), 2.0);
  const Matrix c = rows_of({{std::sqrt(2.0) / 2, std::sqrt(2.0) / 2}});
  EXPECT_NEAR(build_cost(view(a), view(c)).entries(0, 0), 0.29289321881345254, 1e-15);
}

TEST(BuildCost, ShapeMismatch) {
  const Matrix a = Matrix::Identity(2, 3), b = Matrix::Identity(3, 3);
  EXPECT_THROW(build_cost(view(a), view(b)), ShapeError);
}

TEST(AugmentCost, BlockLayout) {
  const auto aug = augment_cost(CostMatrix{rows_of({{0, 1}, {1, 0}})}, 0.35, 0.35);
  const Matrix expected = rows_of({{0, 1, 0.35}, {1, 0, 0.35}, {0.35, 0.35, 0}});
  EXPECT_EQ(aug.entries, expected);

  const auto small = augment_cost(CostMatrix{rows_of({{0.5}})}, 0.35, 0.35);
  EXPECT_EQ(small.entries, rows_of({{0.5, 0.35}, {0.35, 0}}));

  const auto free_route = augment_cost(CostMatrix{rows_of({{0.5}})}, 0.0, 0.0);
  EXPECT_EQ(free_route.entries, rows_of({{0.5, 0}, {0, 0}}));

  // Distinct penalties land in the right places: death column, birth row.
  const auto asym = augment_cost(CostMatrix{rows_of({{0.5}})}, 0.1, 0.9);
  EXPECT_EQ(asym.entries(0, 1), 0.9);
  EXPECT_EQ(asym.entries(1, 0), 0.1);

  EXPECT_THROW(augment_cost(CostMatrix{rows_of({{0.5}})}, -0.1, 0.35), DomainError);
}

TEST(Marginal, SlackLayout) {
  const auto a = Marginal::with_slack(4);
  ASSERT_EQ(a.values.size(), 5);
  EXPECT_EQ(a.values[0], 0.25);
  EXPECT_EQ(a.values[4], 1.0);
  EXPECT_NEAR(a.values.sum(), 2.0, 1e-12);
}

TEST(Sinkhorn, SingleTokenConvergesToDiagonal) {
  const AugmentedCost c{rows_of({{0, 0.35}, {0.35, 0}})};
  const auto plan = sinkhorn(c, Marginal::with_slack(1), 0.005, 500);
  EXPECT_NEAR(plan.entries(0, 0), 1.0, 1e-6);
  EXPECT_NEAR(plan.entries(1, 1), 1.0, 1e-6);
  EXPECT_LT(plan.entries(0, 1), 1e-6);
  EXPECT_LT(plan.entries(1, 0), 1e-6);
  EXPECT_LT(transport_objective(plan, c.entries), 1e-6);

  const auto exact = exact_ot_oracle(c, Marginal::with_slack(1));
  EXPECT_EQ(exact.entries, rows_of({{1, 0}, {0, 1}}));
}

TEST(Sinkhorn, RowsExactColumnsConverge) {
  std::mt19937_64 gen(3);
  for (Index n : {1, 5, 32, 100}) {
    const auto pair = injected_pair(gen, n, 64, {0});
    const auto z = project_normalize(pair.tokens, {}, 1e-8);
    const auto aug = augment_cost(build_cost(z.frame(0), z.frame(1)), 0.35, 0.35);
    const auto a = Marginal::with_slack(n);
    const auto plan = sinkhorn(aug, a, 0.1, 200);
    EXPECT_TRUE((plan.entries.array() >= 0.0).all());
    for (Index i = 0; i <= n; ++i) EXPECT_NEAR(plan.entries.row(i).sum(), a.values[i], 1e-12);
    EXPECT_LE(plan.row_residual, 1e-12);
    EXPECT_LE(plan.column_residual, 1e-6);
    double recomputed = 0.0;
    for (Index j = 0; j <= n; ++j)
      recomputed = std::max(recomputed, std::abs(plan.entries.col(j).sum() - a.values[j]));
    EXPECT_LE(recomputed, plan.column_residual + 1e-15);
  }
}

TEST(Sinkhorn, UniformCostShiftLeavesPlanUnchanged) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cost = random_instance(gen, 6);
    AugmentedCost shifted{(cost.entries.array() + 0.7).matrix()};
    const auto p1 = sinkhorn(cost, Marginal::with_slack(6), 0.1, 20);
    const auto p2 = sinkhorn(shifted, Marginal::with_slack(6), 0.1, 20);
    EXPECT_LE((p1.entries - p2.entries).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Sinkhorn, RejectsBadInput) {
  AugmentedCost c{rows_of({{0, 0.35}, {0.35, 0}})};
  EXPECT_THROW(sinkhorn(c, Marginal::with_slack(1), 0.0, 20), DomainError);
  EXPECT_THROW(sinkhorn(c, Marginal::with_slack(1), 0.1, 0), DomainError);
  EXPECT_THROW(sinkhorn(c, Marginal::with_slack(2), 0.1, 20), ShapeError);
  c.entries(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(sinkhorn(c, Marginal::with_slack(1), 0.1, 20), DomainError);
}

TEST(ExactOracle, MatchesBruteForce) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + trial % 3;
    const auto cost = random_instance(gen, n);
    const auto plan = exact_ot_oracle(cost, Marginal::with_slack(n));
    EXPECT_NEAR(transport_objective(plan, cost.entries), brute_force_objective(cost), 1e-12);
    const auto a = Marginal::with_slack(n);
    for (Index i = 0; i <= n; ++i) {
      EXPECT_NEAR(plan.entries.row(i).sum(), a.values[i], 1e-12);
      EXPECT_NEAR(plan.entries.col(i).sum(), a.values[i], 1e-12);
    }
  }
}

TEST(ExactOracle, ExpensiveSlackIsNeverUsed) {
  std::mt19937_64 gen(19);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 1 + trial % 6;
    std::uniform_real_distribution<double> u(0.0, 2.0);
    CostMatrix c{Matrix(n, n)};
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) c.entries(i, j) = u(gen);
    const auto plan = exact_ot_oracle(augment_cost(c, 10.0, 10.0), Marginal::with_slack(n));
    EXPECT_EQ(plan.entries.row(n).head(n).sum(), 0.0);
    EXPECT_EQ(plan.entries.col(n).head(n).sum(), 0.0);
  }
}

TEST(ExactOracle, ZeroCostAndSizeGuard) {
  const auto zero = augment_cost(CostMatrix{Matrix::Zero(3, 3)}, 0.35, 0.35);
  EXPECT_EQ(transport_objective(exact_ot_oracle(zero, Marginal::with_slack(3)), zero.entries), 0.0);
  const auto big = augment_cost(CostMatrix{Matrix::Zero(7, 7)}, 0.35, 0.35);
  EXPECT_THROW(exact_ot_oracle(big, Marginal::with_slack(7)), SizeError);
}

TEST(Sinkhorn, ObjectiveApproachesExactOptimum) {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + trial % 3;
    const auto cost = random_instance(gen, n);
    const auto a = Marginal::with_slack(n);
    const double exact = transport_objective(exact_ot_oracle(cost, a), cost.entries);
    const double entropic = transport_objective(sinkhorn(cost, a, 0.005, 2000), cost.entries);
    EXPECT_LE(std::abs(entropic - exact), 0.01 * exact) << "trial " << trial;
  }
}

TEST(TemporalScores, PerfectContinuityGivesZero) {
  const Index n = 4;
  AugmentedCost cost = augment_cost(CostMatrix{Matrix::Ones(n, n) - Matrix::Identity(n, n)}, 0.35, 0.35);
  TransportPlan plan{Matrix::Zero(n + 1, n + 1)};
  for (Index i = 0; i < n; ++i) plan.entries(i, i) = 1.0 / n;
  plan.entries(n, n) = 1.0;
  const auto s = temporal_scores(plan, cost);
  EXPECT_EQ(s.e, Vector::Zero(n));
  EXPECT_EQ(s.b, Vector::Zero(n));
  EXPECT_EQ(s.death, Vector::Zero(n));
}

TEST(TemporalScores, SingleTokenSolvedPlan) {
  const AugmentedCost c{rows_of({{0, 0.35}, {0.35, 0}})};
  const auto s = temporal_scores(sinkhorn(c, Marginal::with_slack(1), 0.005, 500), c);
  EXPECT_NEAR(s.e[0], 0.0, 1e-12);
  EXPECT_NEAR(s.b[0], 0.0, 1e-6);
}

TEST(TemporalScores, OrthogonalTargetIsBorn) {
  // Target 1 is orthogonal to both sources: matching costs 1 > 0.35 + 0.35.
  const Matrix prev = rows_of({{1, 0, 0}, {0, 1, 0}});
  const Matrix curr = rows_of({{1, 0, 0}, {0, 0, 1}});
  const auto aug = augment_cost(build_cost(view(prev), view(curr)), 0.35, 0.35);
  const auto a = Marginal::with_slack(2);
  const auto exact = temporal_scores(exact_ot_oracle(aug, a), aug);
  EXPECT_EQ(exact.b[1], 0.5);
  EXPECT_EQ(exact.b[0], 0.0);
  const auto s = temporal_scores(sinkhorn(aug, a, 0.01, 2000), aug);
  EXPECT_GT(s.b[1], s.b[0]);
  EXPECT_GE(s.b[1], 0.9 * exact.b[1]);
}

TEST(SpatialNovelty, Examples) {
  const Matrix same = rows_of({{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}});
  EXPECT_LE(spatial_novelty(view(same)).cwiseAbs().maxCoeff(), 1e-15);

  const Matrix opposite = rows_of({{1, 0}, {-1, 0}});
  const Vector s2 = spatial_novelty(view(opposite));
  EXPECT_DOUBLE_EQ(s2[0], 1.0);
  EXPECT_DOUBLE_EQ(s2[1], 1.0);

  const Matrix three = rows_of({{1, 0}, {0, 1}, {0, -1}});
  const Vector s3 = spatial_novelty(view(three));
  EXPECT_NEAR(s3[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s3[1], 1.0540925533894598, 1e-15);
  EXPECT_NEAR(s3[2], 1.0540925533894598, 1e-15);
}

namespace {

// Four tokens on an arc in the xy-plane; target 2 is replaced by +z.
struct ArcInstance {
  Matrix prev = rows_of({{1, 0, 0}, {0.8, 0.6, 0}, {0.6, 0.8, 0}, {0, 1, 0}});
  Matrix curr = rows_of({{1, 0, 0}, {0.8, 0.6, 0}, {0, 0, 1}, {0, 1, 0}});
};

}  // namespace

TEST(Variants, HardAssignmentOnIdenticalFrames) {
  std::mt19937_64 gen(29);
  const Matrix frame = ottrim::testing::unit_rows(gen, 8, 16);
  const auto s = temporal_scores_variant(TransportMode::hard_assignment, view(frame), view(frame), {});
  EXPECT_LE(s.e.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(s.b, Vector::Zero(8));
}

TEST(Variants, BalancedOtSmearsInjectedToken) {
  const ArcInstance arc;
  const RunConfig cfg;
  const auto s = temporal_scores_variant(TransportMode::balanced_ot, view(arc.prev), view(arc.curr), cfg);
  EXPECT_GT(s.e[2], 0.0);
  EXPECT_LE(s.e[2], 1.0);
  EXPECT_EQ(s.b, Vector::Zero(4));
  const auto cost = build_cost(view(arc.prev), view(arc.curr));
  const auto plan = solve_entropic(cost.entries, Marginal::uniform(4).values, cfg.epsilon_ot, cfg.sinkhorn_iters);
  EXPECT_GT((plan.entries.col(2).array() > 1e-3).count(), 1);
}

TEST(Variants, BirthDeathIsolatesInjectedToken) {
  const ArcInstance arc;
  const RunConfig cfg;
  const auto s = temporal_scores_variant(TransportMode::birth_death, view(arc.prev), view(arc.curr), cfg);
  for (Index j : {0, 1, 3}) EXPECT_GT(s.b[2], s.b[j]);
  // The unregularized optimum agrees: only the injected target is born.
  const auto aug = augment_cost(build_cost(view(arc.prev), view(arc.curr)), 0.35, 0.35);
  const auto exact = temporal_scores(exact_ot_oracle(aug, Marginal::with_slack(4)), aug);
  EXPECT_EQ(exact.b[2], 0.25);
  for (Index j : {0, 1, 3}) EXPECT_EQ(exact.b[j], 0.0);
}

TEST(Variants, OnlyBirthClosesDeathRoute) {
  const ArcInstance arc;
  const auto s = temporal_scores_variant(TransportMode::only_birth, view(arc.prev), view(arc.curr), {});
  EXPECT_LT(s.death.maxCoeff(), 1e-12);
}

TEST(TransportProperties, BirthMassShrinksAsPenaltyGrows) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pair = injected_pair(gen, 16, 32, {2, 9});
    const auto z = project_normalize(pair.tokens, {}, 1e-8);
    double previous = std::numeric_limits<double>::infinity();
    for (double c_birth : {0.0, 0.1, 0.35, 1.0, 10.0}) {
      RunConfig cfg;
      cfg.c_birth = c_birth;
      const auto s = temporal_scores_variant(TransportMode::birth_death, z.frame(0), z.frame(1), cfg);
      EXPECT_LE(s.b.sum(), previous + 1e-9) << "c_birth " << c_birth;
      previous = s.b.sum();
    }
  }
}

TEST(TransportProperties, PermutationEquivariance) {
  std::mt19937_64 gen(37);
  const RunConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    const auto pair = injected_pair(gen, 12, 32, {4});
    const auto z = project_normalize(pair.tokens, {}, 1e-8);
    const Matrix prev = z.frame(0), curr = z.frame(1);
    std::vector<Index> perm(12);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), gen);
    Matrix curr_p(12, curr.cols()), prev_p(12, prev.cols());
    for (Index k = 0; k < 12; ++k) {
      curr_p.row(k) = curr.row(perm[k]);
      prev_p.row(k) = prev.row(perm[k]);
    }
    const auto base = temporal_scores_variant(TransportMode::birth_death, view(prev), view(curr), cfg);
    const auto by_curr = temporal_scores_variant(TransportMode::birth_death, view(prev), view(curr_p), cfg);
    for (Index k = 0; k < 12; ++k) {
      EXPECT_NEAR(by_curr.e[k], base.e[perm[k]], 1e-12);
      EXPECT_NEAR(by_curr.b[k], base.b[perm[k]], 1e-12);
    }
    const auto by_prev = temporal_scores_variant(TransportMode::birth_death, view(prev_p), view(curr), cfg);
    EXPECT_LE((by_prev.b - base.b).cwiseAbs().maxCoeff(), 1e-9);
    std::vector<double> e1(base.e.begin(), base.e.end()), e2(by_prev.e.begin(), by_prev.e.end());
    std::sort(e1.begin(), e1.end());
    std::sort(e2.begin(), e2.end());
    for (std::size_t k = 0; k < e1.size(); ++k) EXPECT_NEAR(e1[k], e2[k], 1e-9);
  }
}

TEST(TransportProperties, SlackNodeAvoidsDilution) {
  std::mt19937_64 gen(41);
  const RunConfig cfg;
  int weakly_better = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index injected = static_cast<Index>(gen() % 16);
    const auto pair = injected_pair(gen, 16, 32, {injected});
    const auto z = project_normalize(pair.tokens, {}, 1e-8);
    const auto bal = temporal_scores_variant(TransportMode::balanced_ot, z.frame(0), z.frame(1), cfg);
    const auto bd = temporal_scores_variant(TransportMode::birth_death, z.frame(0), z.frame(1), cfg);
    EXPECT_EQ(bal.b.maxCoeff(), 0.0);
    EXPECT_GT(bd.b.maxCoeff(), bal.b.maxCoeff());
    const Vector combined = bd.e + bd.b;
    const auto rank = [](const Vector& v, Index j) { return (v.array() > v[j]).count(); };
    if (rank(bal.e, injected) >= rank(combined, injected)) ++weakly_better;
  }
  EXPECT_GE(weakly_better, 90);
}

TEST(OracleCheck, LibraryHarnessStaysWithinOnePercent) {
  const auto r = run_oracle_check({});
  EXPECT_EQ(r.instances, 50u);
  EXPECT_LE(r.max_relative_gap, 0.01);
}
