#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include <json.hpp>

#include "ottrim/error.hpp"

namespace ottrim {

// FLOP counts are exact unsigned 128-bit integers; a count that does not
// fit raises RangeError instead of wrapping.
using FlopCount = unsigned __int128;

struct ModelDims {
  std::uint64_t layers = 0;
  std::uint64_t hidden = 0;  // d
  std::uint64_t ffn = 0;     // m

  void validate() const {
    if (layers == 0 || hidden == 0 || ffn == 0)
      throw DomainError("layers, hidden and ffn must all be positive");
  }
};

struct SequenceBudget {
  std::uint64_t n_sys = 0;
  std::uint64_t n_txt = 0;
  std::uint64_t frames = 1;            // T
  std::uint64_t tokens_per_frame = 1;  // N
  std::optional<std::uint64_t> kept;   // K
};

namespace detail {

inline FlopCount checked_mul(FlopCount a, FlopCount b) {
  FlopCount r;
  if (__builtin_mul_overflow(a, b, &r)) throw RangeError("FLOP count overflows 128 bits");
  return r;
}

inline FlopCount checked_add(FlopCount a, FlopCount b) {
  FlopCount r;
  if (__builtin_add_overflow(a, b, &r)) throw RangeError("FLOP count overflows 128 bits");
  return r;
}

inline std::uint64_t narrow_u64(FlopCount v) {
  if (v > std::numeric_limits<std::uint64_t>::max())
    throw RangeError("count exceeds the 64-bit range of the JSON report");
  return static_cast<std::uint64_t>(v);
}

}  // namespace detail

/// The three per-model terms of the transformer cost, each already
/// multiplied by the layer count.
struct FlopTerms {
  FlopCount projection = 0;  // L * 4 n d^2
  FlopCount attention = 0;   // L * 2 n^2 d
  FlopCount ffn = 0;         // L * 2 n d m
  FlopCount total() const {
    return detail::checked_add(detail::checked_add(projection, attention), ffn);
  }
};

inline FlopTerms transformer_flop_terms(const ModelDims& dims, std::uint64_t n) {
  using detail::checked_mul;
  dims.validate();
  if (n < 1) throw DomainError("sequence length must be at least 1");
  const FlopCount L = dims.layers, d = dims.hidden, m = dims.ffn, nn = n;
  FlopTerms t;
  t.projection = checked_mul(L, checked_mul(4, checked_mul(nn, checked_mul(d, d))));
  t.attention = checked_mul(L, checked_mul(2, checked_mul(checked_mul(nn, nn), d)));
  t.ffn = checked_mul(L, checked_mul(2, checked_mul(nn, checked_mul(d, m))));
  return t;
}

/// L * (4 n d^2 + 2 n^2 d + 2 n d m).
inline FlopCount transformer_flops(const ModelDims& dims, std::uint64_t n) {
  return transformer_flop_terms(dims, n).total();
}

/// Visual tokens in the sequence: one global plus the patch tokens, per frame.
inline std::uint64_t visual_length(std::uint64_t frames, std::uint64_t tokens_per_frame) {
  return static_cast<std::uint64_t>(
      detail::checked_mul(frames, detail::checked_add(tokens_per_frame, 1)));
}

/// (T - 1) * iters * (N + 1)^2 Sinkhorn entry updates; zero for one frame.
inline FlopCount ot_overhead(std::uint64_t frames, std::uint64_t tokens_per_frame,
                             std::uint64_t iters) {
  if (frames < 1) throw DomainError("frame count must be at least 1");
  const FlopCount side = FlopCount(tokens_per_frame) + 1;
  return detail::checked_mul(detail::checked_mul(frames - 1, iters), detail::checked_mul(side, side));
}

struct CostReport {
  ModelDims dims;
  SequenceBudget budget;
  std::uint64_t sinkhorn_iters = 0;
  std::uint64_t n_before = 0;
  std::uint64_t n_after = 0;
  FlopTerms terms_before;
  FlopTerms terms_after;
  FlopCount flops_before = 0;
  FlopCount flops_after = 0;
  FlopCount ot_overhead = 0;
  double quad_reduction_factor = 0.0;  // 1 - (K+1)^2 / (N+1)^2
  double total_reduction_ratio = 0.0;  // flops_after / flops_before
};

inline CostReport reduction_report(const ModelDims& dims, const SequenceBudget& budget,
                                   std::uint64_t iters) {
  if (!budget.kept) throw DomainError("reduction report needs the retained count K");
  const std::uint64_t n = budget.tokens_per_frame, k = *budget.kept;
  if (budget.frames < 1 || n < 1) throw DomainError("frames and tokens_per_frame must be >= 1");
  if (k > n) throw DomainError("retained count K exceeds N");

  CostReport r;
  r.dims = dims;
  r.budget = budget;
  r.sinkhorn_iters = iters;
  const std::uint64_t fixed = budget.n_sys + budget.n_txt;
  r.n_before = fixed + visual_length(budget.frames, n);
  r.n_after = fixed + visual_length(budget.frames, k);
  r.terms_before = transformer_flop_terms(dims, r.n_before);
  r.terms_after = transformer_flop_terms(dims, r.n_after);
  r.flops_before = r.terms_before.total();
  r.flops_after = r.terms_after.total();
  r.ot_overhead = ot_overhead(budget.frames, n, iters);
  const double kk = static_cast<double>(k + 1), nn = static_cast<double>(n + 1);
  r.quad_reduction_factor = 1.0 - (kk * kk) / (nn * nn);
  r.total_reduction_ratio = static_cast<double>(r.flops_after) / static_cast<double>(r.flops_before);
  return r;
}

inline std::string to_decimal(FlopCount v) {
  if (v == 0) return "0";
  std::string s;
  while (v > 0) {
    s.insert(s.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  return s;
}

inline void to_json(nlohmann::json& j, const FlopTerms& t) {
  using detail::narrow_u64;
  j = nlohmann::json{{"projection", narrow_u64(t.projection)},
                     {"attention", narrow_u64(t.attention)},
                     {"ffn", narrow_u64(t.ffn)},
                     {"total", narrow_u64(t.total())}};
}

inline void to_json(nlohmann::json& j, const CostReport& r) {
  using detail::narrow_u64;
  j = nlohmann::json{
      {"dims", {{"layers", r.dims.layers}, {"hidden", r.dims.hidden}, {"ffn", r.dims.ffn}}},
      {"budget",
       {{"n_sys", r.budget.n_sys},
        {"n_txt", r.budget.n_txt},
        {"frames", r.budget.frames},
        {"tokens_per_frame", r.budget.tokens_per_frame},
        {"kept", r.budget.kept.value_or(r.budget.tokens_per_frame)}}},
      {"sinkhorn_iters", r.sinkhorn_iters},
      {"n_before", r.n_before},
      {"n_after", r.n_after},
      {"terms_before", r.terms_before},
      {"terms_after", r.terms_after},
      {"flops_before", narrow_u64(r.flops_before)},
      {"flops_after", narrow_u64(r.flops_after)},
      {"ot_overhead", narrow_u64(r.ot_overhead)},
      {"ot_overhead_unit", "sinkhorn_entry_updates"},
      {"quad_reduction_factor", r.quad_reduction_factor},
      {"total_reduction_ratio", r.total_reduction_ratio}};
}

}  // namespace ottrim
