#pragma once

// Evaluation protocol: per-query outcomes, aggregated success / help /
// normalized-size metrics, alpha sweeps and baseline comparison.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confset/calibration.hpp"
#include "confset/cp_core.hpp"
#include "json.hpp"

namespace confset {

struct QueryOutcome {
  std::string query_id;
  std::size_t set_size = 0;
  // set_size / K of the query's scene.
  double normalized_set_size = 0.0;
  // True label is in the set.
  bool success = false;
  // set_size > 1.
  bool help = false;
};

QueryOutcome evaluate_query(const PredictionSet& set, LabelIndex true_label,
                            std::size_t label_count, std::string query_id = {});

struct MetricsPoint {
  double alpha = 0.0;
  double success_rate = 0.0;
  double help_rate = 0.0;
  double mean_normalized_set_size = 0.0;
  std::size_t n_queries = 0;

  friend bool operator==(const MetricsPoint&, const MetricsPoint&) = default;
};

// Arithmetic means in input order. Throws DomainError on an empty list.
MetricsPoint aggregate(std::span<const QueryOutcome> outcomes, double alpha);

struct CurveProvenance {
  std::vector<std::string> calibration_sources;
  std::size_t calibration_size = 0;
  ScoreNormalization normalization;

  friend bool operator==(const CurveProvenance&, const CurveProvenance&) = default;
};

struct TradeoffCurve {
  std::vector<MetricsPoint> points;
  Construction construction = Construction::kRanked;
  CurveProvenance provenance;

  friend bool operator==(const TradeoffCurve&, const TradeoffCurve&) = default;
};

// `points` evenly spaced alphas i / (points - 1) over [0, 1]. Needs points >= 2.
std::vector<double> default_alpha_grid(std::size_t points = 101);

// Prediction sets for every test query at one calibrated threshold.
std::vector<PredictionSet> predict_all(std::span<const LabeledQuery> test,
                                       const QuantileThreshold& q,
                                       Construction construction);

std::vector<QueryOutcome> evaluate_all(std::span<const LabeledQuery> test,
                                       std::span<const PredictionSet> sets);

// One point per alpha, each recalibrated from `calibration`. Alphas must be
// strictly increasing within [0, 1]. Points are computed on up to `threads`
// workers; the result is identical for any thread count.
TradeoffCurve alpha_sweep(const CalibrationSet& calibration,
                          std::span<const LabeledQuery> test,
                          std::span<const double> alphas, Construction construction,
                          unsigned threads = 1);

enum class BaselineKind { kNoHelp, kPromptSet, kBinarySet };

std::string_view to_string(BaselineKind kind);

struct BaselineResult {
  BaselineKind name = BaselineKind::kNoHelp;
  double success_rate = 0.0;
  double help_rate = 0.0;
  // Absent for the binary certain/uncertain baseline, which emits no sets.
  std::optional<double> mean_normalized_set_size;
  std::size_t n_queries = 0;
  std::vector<QueryOutcome> outcomes;
};

// Top-1 by rank_labels for every query, no help requested.
BaselineResult baseline_no_help(std::span<const LabeledQuery> test);

// Scores an externally produced baseline against the test split.
//   {"name": "PROMPT_SET", "entries": {query_id: [label, ...]}}
//   {"name": "BINARY_SET", "entries": {query_id: "certain" | "uncertain"}}
// "certain" is scored as the top-1 label without help; "uncertain" hands the
// full label set to a human, which counts as success with help. Entry ids
// must match the test split exactly (ConsistencyError lists the difference).
BaselineResult score_baseline_fixture(const nlohmann::json& fixture,
                                      std::span<const LabeledQuery> test);
BaselineResult ingest_baseline_fixture(const std::filesystem::path& path,
                                       std::span<const LabeledQuery> test);

enum class CurveFormat { kCsv, kJson };

// Header alpha,success_rate,help_rate,mean_normalized_set_size,n_queries and
// one row per point. Reals use the shortest round-trip representation.
std::string curve_to_csv(const TradeoffCurve& curve);
nlohmann::json curve_to_json(const TradeoffCurve& curve);
TradeoffCurve curve_from_json(const nlohmann::json& document);

// Throws DomainError on an empty curve, std::runtime_error if unwritable.
void export_curve(const TradeoffCurve& curve, const std::filesystem::path& path,
                  CurveFormat format);

// Shortest decimal text that parses back to the same double.
std::string format_real(double value);

}  // namespace confset
