#pragma once

// Split conformal prediction primitives over per-label similarity scores.
//
// A scorer maps a query to one similarity f in [0, 1] per candidate label.
// Calibration turns held-out true-label non-conformity scores s = 1 - f into
// a threshold q_hat; prediction sets are then built from a fresh score vector
// either by thresholding (every label with s <= q_hat) or by taking the ranked
// prefix of conforming labels plus one more.
//
// Everything here is a pure function of its arguments.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace confset {

using LabelIndex = std::size_t;

// s = 1 - f. Throws DomainError unless 0 <= f <= 1.
double nonconformity(double similarity);

class ErrorRate {
 public:
  // Throws DomainError unless 0 <= alpha <= 1.
  explicit ErrorRate(double alpha);
  double value() const noexcept { return alpha_; }

 private:
  double alpha_;
};

// Similarity scores for one query, one entry per label index 0..K-1.
class ScoreVector {
 public:
  // Throws DomainError if empty or any entry is outside [0, 1] (NaN included).
  explicit ScoreVector(std::vector<double> scores);

  std::size_t label_count() const noexcept { return scores_.size(); }
  double operator[](LabelIndex label) const { return scores_[label]; }
  std::span<const double> scores() const noexcept { return scores_; }

  friend bool operator==(const ScoreVector&, const ScoreVector&) = default;

 private:
  std::vector<double> scores_;
};

// Label indices by descending score; equal scores keep ascending label index.
using RankPermutation = std::vector<LabelIndex>;

RankPermutation rank_labels(const ScoreVector& scores);

// Rank position k = ceil((n + 1)(1 - alpha)) of the calibration order
// statistic. Products within 1e-9 (relative) of an integer snap to it, so
// that e.g. n = 19, alpha = 0.1 gives 18 regardless of binary rounding.
std::size_t conformal_rank(std::size_t n, double alpha);

class QuantileThreshold {
 public:
  enum class Kind {
    kFinite,
    // k > n: every label is admitted.
    kInfinite,
    // k == 0 (alpha == 1): no label is admitted.
    kNegativeInfinite,
  };

  static QuantileThreshold Finite(double value, double alpha, std::size_t rank,
                                  std::size_t n);
  static QuantileThreshold Infinite(double alpha, std::size_t rank, std::size_t n);
  static QuantileThreshold NegativeInfinite(double alpha, std::size_t n);

  Kind kind() const noexcept { return kind_; }
  bool is_finite() const noexcept { return kind_ == Kind::kFinite; }
  // Throws std::logic_error unless finite.
  double value() const;
  double alpha() const noexcept { return alpha_; }
  std::size_t rank() const noexcept { return rank_; }
  std::size_t calibration_size() const noexcept { return n_; }
  // rank / n.
  double source_level() const noexcept;

  // Whether a label with this non-conformity score passes the threshold.
  bool admits(double nonconformity_score) const noexcept;

  // "0.18", "inf" or "-inf".
  std::string to_string() const;

  friend bool operator==(const QuantileThreshold&, const QuantileThreshold&) = default;

 private:
  QuantileThreshold(Kind kind, double value, double alpha, std::size_t rank,
                    std::size_t n)
      : kind_(kind), value_(value), alpha_(alpha), rank_(rank), n_(n) {}

  Kind kind_;
  double value_;
  double alpha_;
  std::size_t rank_;
  std::size_t n_;
};

// k-th smallest calibration score (exact order statistic, duplicates kept),
// with k = conformal_rank(n, alpha). Throws DomainError on an empty set.
QuantileThreshold calibrate_quantile(std::span<const double> calibration_scores,
                                     ErrorRate alpha);

enum class Construction { kThreshold, kRanked };

std::string_view to_string(Construction construction);
// Accepts "threshold" / "ranked" in any case. Throws DomainError otherwise.
Construction parse_construction(std::string_view name);

struct PredictionSet {
  // Descending-score order, no duplicates.
  std::vector<LabelIndex> labels;
  Construction construction;
  QuantileThreshold q_used;

  double alpha_used() const noexcept { return q_used.alpha(); }
  std::size_t size() const noexcept { return labels.size(); }
  bool contains(LabelIndex label) const;
};

// {Y : 1 - f(Y) <= q_hat}. May be empty.
PredictionSet predict_set_threshold(const ScoreVector& scores,
                                    const QuantileThreshold& q);

// First min(m + 1, K) ranked labels, m = number of leading ranked labels with
// s <= q_hat (0 if none). Never empty.
PredictionSet predict_set_ranked(const ScoreVector& scores,
                                 const QuantileThreshold& q);

PredictionSet predict_set(const ScoreVector& scores, const QuantileThreshold& q,
                          Construction construction);

}  // namespace confset
