#pragma once

// Calibration dataset construction from scene score files.
//
// A scene file holds raw scorer outputs for the queries of one scene (one
// score per candidate label of that scene). Raw scores are mapped into [0, 1]
// by a ScoreNormalization, ranked per query into the full scored dataset, and
// reduced to the true-label non-conformity score of each query.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "confset/cp_core.hpp"
#include "json.hpp"

namespace confset {

// Raw scorer output for one query as read from a scene file.
struct RawQuery {
  std::string query_id;
  std::vector<double> scores;
  LabelIndex true_label = 0;

  friend bool operator==(const RawQuery&, const RawQuery&) = default;
};

struct SceneFile {
  std::string scene_id;
  std::vector<std::string> labels;
  std::vector<RawQuery> queries;
  // File name the scene was read from (empty for in-memory scenes).
  std::string source;

  std::size_t label_count() const noexcept { return labels.size(); }
};

// Validates a parsed scene document. Every diagnostic names the source, the
// query and the field. Rejects missing fields, wrong types, non-finite scores,
// score/label count mismatches, true_label >= K and duplicate query ids.
SceneFile parse_scene(const nlohmann::json& document, const std::string& source);
SceneFile ingest_scene_file(const std::filesystem::path& path);
nlohmann::json scene_to_json(const SceneFile& scene);
void write_scene_file(const SceneFile& scene, const std::filesystem::path& path);

// Every *.json file in `dir` except run_config.json, in file-name order.
// Query ids must be unique across the whole directory.
std::vector<SceneFile> ingest_scene_dir(const std::filesystem::path& dir);

enum class NormalizationMode { kNone, kMinMax, kSoftmax };

std::string_view to_string(NormalizationMode mode);
// "none", "min-max" (or "min_max"), "softmax".
NormalizationMode parse_normalization_mode(std::string_view name);

// Maps raw scores into [0, 1].
//  kNone     identity; out-of-range input is an error.
//  kMinMax   (x - min) / (max - min) with min/max fitted on the calibration
//            split; values outside the fitted range are clamped.
//  kSoftmax  exp(x / T) / sum exp(x / T) over one query's score vector.
struct ScoreNormalization {
  NormalizationMode mode = NormalizationMode::kSoftmax;
  double min = 0.0;
  double max = 1.0;
  double temperature = 1.0;

  static ScoreNormalization None();
  static ScoreNormalization Softmax(double temperature = 1.0);
  static ScoreNormalization MinMax(double min, double max);
  // Global min/max over every raw score of the given scenes.
  static ScoreNormalization FitMinMax(std::span<const SceneFile> calibration_scenes);

  nlohmann::json to_json() const;
  static ScoreNormalization from_json(const nlohmann::json& document);

  friend bool operator==(const ScoreNormalization&, const ScoreNormalization&) = default;
};

// Normalizes one query's raw score vector.
std::vector<double> normalize_scores(std::span<const double> raw_scores,
                                     const ScoreNormalization& norm);

struct LabeledQuery {
  std::string query_id;
  std::string scene_id;
  ScoreVector scores;
  LabelIndex true_label;

  std::size_t label_count() const noexcept { return scores.label_count(); }
};

// Throws IngestionError naming the query if normalization fails or the true
// label is out of range.
std::vector<LabeledQuery> normalize_scene(const SceneFile& scene,
                                          const ScoreNormalization& norm);
std::vector<LabeledQuery> normalize_scenes(std::span<const SceneFile> scenes,
                                           const ScoreNormalization& norm);

struct ScoredRecord {
  double nonconformity;
  std::string query_id;
  LabelIndex label;

  friend bool operator==(const ScoredRecord&, const ScoredRecord&) = default;
};

// All (s, query, label) triples, grouped per query in rank order.
struct RawScoredDataset {
  std::vector<ScoredRecord> records;
};

// True-label non-conformity score of each calibration query.
struct CalibrationSet {
  std::vector<double> scores;
  // Query ids, parallel to scores.
  std::vector<std::string> provenance;

  std::size_t size() const noexcept { return scores.size(); }
  bool empty() const noexcept { return scores.empty(); }
};

RawScoredDataset build_raw_dataset(std::span<const LabeledQuery> queries);

// One record per query, the one carrying its true label; query order is kept.
// Throws ConsistencyError if a query has no such record.
CalibrationSet filter_true_labels(const RawScoredDataset& raw,
                                  std::span<const LabeledQuery> queries);

QuantileThreshold calibrate_quantile(const CalibrationSet& calibration, ErrorRate alpha);

// On-disk calibration artifact: the calibration set plus what is needed to
// normalize a test split the same way.
struct CalibrationArtifact {
  CalibrationSet calibration;
  ScoreNormalization normalization;
  std::vector<std::string> sources;

  nlohmann::json to_json() const;
  static CalibrationArtifact from_json(const nlohmann::json& document);
};

}  // namespace confset
