#include "confset/cp_core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "confset/errors.hpp"

namespace confset {
namespace {

std::string FormatValue(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

bool InUnitInterval(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

double nonconformity(double similarity) {
  if (!InUnitInterval(similarity)) {
    throw DomainError("similarity score " + FormatValue(similarity) +
                      " is outside [0, 1]");
  }
  return 1.0 - similarity;
}

ErrorRate::ErrorRate(double alpha) : alpha_(alpha) {
  if (!InUnitInterval(alpha)) {
    throw DomainError("error rate alpha = " + FormatValue(alpha) +
                      " is outside [0, 1]");
  }
}

ScoreVector::ScoreVector(std::vector<double> scores) : scores_(std::move(scores)) {
  if (scores_.empty()) throw DomainError("score vector has no labels");
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    if (!InUnitInterval(scores_[i])) {
      throw DomainError("score for label " + std::to_string(i) + " is " +
                        FormatValue(scores_[i]) + ", outside [0, 1]");
    }
  }
}

RankPermutation rank_labels(const ScoreVector& scores) {
  RankPermutation order(scores.label_count());
  std::iota(order.begin(), order.end(), LabelIndex{0});
  std::stable_sort(order.begin(), order.end(), [&](LabelIndex a, LabelIndex b) {
    return scores[a] > scores[b];
  });
  return order;
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  ErrorRate checked(alpha);
  const double product = static_cast<double>(n + 1) * (1.0 - checked.value());
  const double nearest = std::round(product);
  if (std::abs(product - nearest) <= 1e-9 * std::max(1.0, product)) {
    return static_cast<std::size_t>(nearest);
  }
  return static_cast<std::size_t>(std::ceil(product));
}

QuantileThreshold QuantileThreshold::Finite(double value, double alpha,
                                            std::size_t rank, std::size_t n) {
  return {Kind::kFinite, value, alpha, rank, n};
}

QuantileThreshold QuantileThreshold::Infinite(double alpha, std::size_t rank,
                                              std::size_t n) {
  return {Kind::kInfinite, std::numeric_limits<double>::infinity(), alpha, rank, n};
}

QuantileThreshold QuantileThreshold::NegativeInfinite(double alpha, std::size_t n) {
  return {Kind::kNegativeInfinite, -std::numeric_limits<double>::infinity(), alpha,
          0, n};
}

double QuantileThreshold::value() const {
  if (kind_ != Kind::kFinite) {
    throw std::logic_error("quantile threshold " + to_string() + " has no finite value");
  }
  return value_;
}

double QuantileThreshold::source_level() const noexcept {
  return static_cast<double>(rank_) / static_cast<double>(n_);
}

bool QuantileThreshold::admits(double nonconformity_score) const noexcept {
  switch (kind_) {
    case Kind::kInfinite:
      return true;
    case Kind::kNegativeInfinite:
      return false;
    case Kind::kFinite:
      break;
  }
  return nonconformity_score <= value_;
}

std::string QuantileThreshold::to_string() const {
  switch (kind_) {
    case Kind::kInfinite:
      return "inf";
    case Kind::kNegativeInfinite:
      return "-inf";
    case Kind::kFinite:
      break;
  }
  return FormatValue(value_);
}

QuantileThreshold calibrate_quantile(std::span<const double> calibration_scores,
                                     ErrorRate alpha) {
  const std::size_t n = calibration_scores.size();
  if (n == 0) throw DomainError("calibration set is empty");
  const std::size_t k = conformal_rank(n, alpha.value());
  if (k > n) return QuantileThreshold::Infinite(alpha.value(), k, n);
  if (k == 0) return QuantileThreshold::NegativeInfinite(alpha.value(), n);

  std::vector<double> work(calibration_scores.begin(), calibration_scores.end());
  auto kth = work.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(work.begin(), kth, work.end());
  return QuantileThreshold::Finite(*kth, alpha.value(), k, n);
}

std::string_view to_string(Construction construction) {
  return construction == Construction::kThreshold ? "threshold" : "ranked";
}

Construction parse_construction(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "threshold") return Construction::kThreshold;
  if (lower == "ranked") return Construction::kRanked;
  throw DomainError("unknown construction '" + std::string(name) +
                    "' (expected threshold or ranked)");
}

bool PredictionSet::contains(LabelIndex label) const {
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

PredictionSet predict_set_threshold(const ScoreVector& scores,
                                    const QuantileThreshold& q) {
  PredictionSet set{{}, Construction::kThreshold, q};
  for (LabelIndex label : rank_labels(scores)) {
    if (q.admits(1.0 - scores[label])) set.labels.push_back(label);
  }
  return set;
}

PredictionSet predict_set_ranked(const ScoreVector& scores, const QuantileThreshold& q) {
  const RankPermutation order = rank_labels(scores);
  // Non-conformity is non-decreasing along the ranking, so the conforming
  // labels form a prefix and its length is the supremum index.
  std::size_t conforming = 0;
  while (conforming < order.size() && q.admits(1.0 - scores[order[conforming]])) {
    ++conforming;
  }
  const std::size_t keep = std::min(conforming + 1, order.size());
  return {{order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep)},
          Construction::kRanked, q};
}

PredictionSet predict_set(const ScoreVector& scores, const QuantileThreshold& q,
                          Construction construction) {
  return construction == Construction::kThreshold ? predict_set_threshold(scores, q)
                                                  : predict_set_ranked(scores, q);
}

}  // namespace confset
