#pragma once

// Brute-force reference computations and random input generators shared by
// the unit and acceptance suites. Nothing here calls into the library's
// quantile or set-construction code.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <utility>
#include <vector>

namespace confset::testing {

// Alpha restricted to multiples of 1/denominator so the order-statistic rank
// can be computed in exact integer arithmetic.
struct RationalAlpha {
  std::int64_t numerator;
  std::int64_t denominator;

  double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
};

// ceil((n + 1) * (1 - a / d)) = ceil((n + 1)(d - a) / d), exact.
inline std::int64_t OracleRank(std::int64_t n, RationalAlpha alpha) {
  const std::int64_t num = (n + 1) * (alpha.denominator - alpha.numerator);
  return (num + alpha.denominator - 1) / alpha.denominator;
}

enum class OracleKind { kFinite, kInfinite, kNegativeInfinite };

struct OracleQuantile {
  OracleKind kind;
  double value;
};

// inf{q : #{i : s_i <= q} >= k}, evaluated by scanning every candidate q in
// ascending order and counting from scratch.
inline OracleQuantile OracleCalibrate(const std::vector<double>& scores, RationalAlpha alpha) {
  const std::int64_t n = static_cast<std::int64_t>(scores.size());
  const std::int64_t k = OracleRank(n, alpha);
  if (k > n) return {OracleKind::kInfinite, std::numeric_limits<double>::infinity()};
  if (k <= 0) return {OracleKind::kNegativeInfinite, -std::numeric_limits<double>::infinity()};
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  for (double candidate : sorted) {
    std::int64_t count = 0;
    for (double s : scores) count += (s <= candidate);
    if (count >= k) return {OracleKind::kFinite, candidate};
  }
  return {OracleKind::kInfinite, std::numeric_limits<double>::infinity()};
}

inline bool OracleAdmits(const OracleQuantile& q, double s) {
  if (q.kind == OracleKind::kInfinite) return true;
  if (q.kind == OracleKind::kNegativeInfinite) return false;
  return s <= q.value;
}

// Labels with 1 - f <= q, as an unordered set.
inline std::set<std::size_t> OracleThresholdSet(const std::vector<double>& f,
                                                const OracleQuantile& q) {
  std::set<std::size_t> out;
  for (std::size_t j = 0; j < f.size(); ++j) {
    if (OracleAdmits(q, 1.0 - f[j])) out.insert(j);
  }
  return out;
}

// Descending score, ties by ascending index, via a comparison sort on pairs.
inline std::vector<std::size_t> OracleRanking(const std::vector<double>& f) {
  std::vector<std::pair<double, std::size_t>> keyed;
  for (std::size_t j = 0; j < f.size(); ++j) keyed.emplace_back(-f[j], j);
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> order;
  for (const auto& [neg, j] : keyed) order.push_back(j);
  return order;
}

// Eq.-style ranked set: sup{k' : s(pi_k') <= q} + 1 (sup of nothing = 0),
// capped at K. Scans every rank position rather than stopping early.
inline std::vector<std::size_t> OracleRankedSet(const std::vector<double>& f,
                                                const OracleQuantile& q) {
  const auto order = OracleRanking(f);
  std::size_t sup = 0;
  for (std::size_t pos = 1; pos <= order.size(); ++pos) {
    if (OracleAdmits(q, 1.0 - f[order[pos - 1]])) sup = std::max(sup, pos);
  }
  const std::size_t keep = std::min(sup + 1, order.size());
  return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep)};
}

// Scores in [0, 1]; with probability `tie_bias` values are snapped to a
// coarse 0.1 grid so ties are common.
inline std::vector<double> RandomScores(std::mt19937_64& rng, std::size_t k,
                                        double tie_bias = 0.3) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coarse(tie_bias);
  const bool snap = coarse(rng);
  std::vector<double> f(k);
  for (double& x : f) {
    x = unit(rng);
    if (snap) x = static_cast<double>(static_cast<int>(x * 10.0)) / 10.0;
  }
  return f;
}

inline std::vector<double> RandomCalibration(std::mt19937_64& rng, std::size_t n,
                                             double tie_bias = 0.3) {
  std::vector<double> s = RandomScores(rng, n, tie_bias);
  for (double& x : s) x = 1.0 - x;
  return s;
}

inline bool IsSubset(const std::vector<std::size_t>& inner,
                     const std::vector<std::size_t>& outer) {
  const std::set<std::size_t> o(outer.begin(), outer.end());
  return std::all_of(inner.begin(), inner.end(), [&](std::size_t x) { return o.contains(x); });
}

}  // namespace confset::testing
