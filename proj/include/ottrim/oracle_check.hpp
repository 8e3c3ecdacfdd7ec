#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ottrim/exact_ot.hpp"
#include "ottrim/rng.hpp"
#include "ottrim/transport.hpp"

namespace ottrim {

/// Random slack-augmented instance: real block uniform in [0, 2], birth and
/// death penalties drawn independently from [0.1, 1].
inline AugmentedCost random_augmented_cost(Rng& rng, Index n) {
  CostMatrix c{Matrix(n, n)};
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) c.entries(i, j) = 2.0 * rng.uniform();
  const double c_birth = 0.1 + 0.9 * rng.uniform();
  const double c_death = 0.1 + 0.9 * rng.uniform();
  return augment_cost(c, c_birth, c_death);
}

struct OracleCheckOptions {
  std::size_t instances = 50;
  Index min_tokens = 2;
  Index max_tokens = 4;
  double epsilon_ot = 0.005;
  int sinkhorn_iters = 2000;
  std::uint64_t seed = 0;
};

struct OracleCheckResult {
  std::size_t instances = 0;
  double max_relative_gap = 0.0;
  double mean_relative_gap = 0.0;
};

/// Compares <P, C> of the entropic plan with the exact optimum on seeded
/// random instances; instance k draws from substream k of the seed.
inline OracleCheckResult run_oracle_check(const OracleCheckOptions& opt) {
  if (opt.min_tokens < 1 || opt.max_tokens < opt.min_tokens || opt.max_tokens > kExactOracleMaxTokens)
    throw DomainError("token range must satisfy 1 <= min <= max <= 6");
  OracleCheckResult out;
  out.instances = opt.instances;
  double total = 0.0;
  for (std::size_t k = 0; k < opt.instances; ++k) {
    Rng rng(substream_seed(opt.seed, k));
    const Index n = opt.min_tokens +
                    static_cast<Index>(rng.below(static_cast<std::uint64_t>(opt.max_tokens - opt.min_tokens + 1)));
    const AugmentedCost cost = random_augmented_cost(rng, n);
    const Marginal a = Marginal::with_slack(n);
    const double exact = transport_objective(exact_ot_oracle(cost, a), cost.entries);
    const double entropic =
        transport_objective(sinkhorn(cost, a, opt.epsilon_ot, opt.sinkhorn_iters), cost.entries);
    const double gap = std::abs(entropic - exact) / std::max(std::abs(exact), 1e-12);
    out.max_relative_gap = std::max(out.max_relative_gap, gap);
    total += gap;
  }
  if (opt.instances > 0) out.mean_relative_gap = total / static_cast<double>(opt.instances);
  return out;
}

}  // namespace ottrim
