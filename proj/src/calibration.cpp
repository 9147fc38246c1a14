#include "confset/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "confset/errors.hpp"

namespace confset {
namespace {

using nlohmann::json;

constexpr const char* kArtifactFormat = "confset-calibration/1";

const json& RequireField(const json& object, const char* field, const std::string& source,
                         const std::string& query_id) {
  auto it = object.find(field);
  if (it == object.end()) throw IngestionError(source, query_id, field, "missing");
  return *it;
}

RawQuery ParseQuery(const json& entry, std::size_t position, std::size_t label_count,
                    const std::string& source) {
  const std::string fallback_id = "#" + std::to_string(position);
  if (!entry.is_object()) {
    throw IngestionError(source, fallback_id, "", "query entry is not an object");
  }
  const json& id = RequireField(entry, "query_id", source, fallback_id);
  if (!id.is_string()) throw IngestionError(source, fallback_id, "query_id", "not a string");

  RawQuery query;
  query.query_id = id.get<std::string>();
  if (query.query_id.empty()) {
    throw IngestionError(source, fallback_id, "query_id", "empty string");
  }

  const json& scores = RequireField(entry, "scores", source, query.query_id);
  if (!scores.is_array()) {
    throw IngestionError(source, query.query_id, "scores", "not an array");
  }
  if (scores.size() != label_count) {
    throw IngestionError(source, query.query_id, "scores",
                         "has " + std::to_string(scores.size()) + " entries, scene has " +
                             std::to_string(label_count) + " labels");
  }
  query.scores.reserve(label_count);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const json& value = scores[i];
    if (!value.is_number()) {
      throw IngestionError(source, query.query_id, "scores",
                           "entry " + std::to_string(i) + " is not a number");
    }
    const double x = value.get<double>();
    if (!std::isfinite(x)) {
      throw IngestionError(source, query.query_id, "scores",
                           "entry " + std::to_string(i) + " is not finite");
    }
    query.scores.push_back(x);
  }

  const json& label = RequireField(entry, "true_label", source, query.query_id);
  if (!label.is_number_integer()) {
    throw IngestionError(source, query.query_id, "true_label", "not an integer");
  }
  if (label.is_number_unsigned()) {
    query.true_label = label.get<std::uint64_t>();
  } else if (label.get<std::int64_t>() < 0) {
    throw IngestionError(source, query.query_id, "true_label", "negative");
  } else {
    query.true_label = static_cast<LabelIndex>(label.get<std::int64_t>());
  }
  if (query.true_label >= label_count) {
    throw IngestionError(source, query.query_id, "true_label",
                         std::to_string(query.true_label) + " >= K = " +
                             std::to_string(label_count));
  }
  return query;
}

double FiniteOrThrow(const json& value, const char* field) {
  if (!value.is_number()) throw DomainError(std::string("normalization '") + field +
                                            "' is not a number");
  return value.get<double>();
}

}  // namespace

SceneFile parse_scene(const json& document, const std::string& source) {
  if (!document.is_object()) throw IngestionError(source, "", "", "document is not an object");

  SceneFile scene;
  scene.source = source;
  const json& scene_id = RequireField(document, "scene_id", source, "");
  if (!scene_id.is_string()) throw IngestionError(source, "", "scene_id", "not a string");
  scene.scene_id = scene_id.get<std::string>();

  const json& labels = RequireField(document, "labels", source, "");
  if (!labels.is_array()) throw IngestionError(source, "", "labels", "not an array");
  if (labels.empty()) throw IngestionError(source, "", "labels", "scene has no labels");
  for (const json& label : labels) {
    if (!label.is_string()) throw IngestionError(source, "", "labels", "entry is not a string");
    scene.labels.push_back(label.get<std::string>());
  }

  const json& queries = RequireField(document, "queries", source, "");
  if (!queries.is_array()) throw IngestionError(source, "", "queries", "not an array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    RawQuery query = ParseQuery(queries[i], i, scene.labels.size(), source);
    if (!seen.insert(query.query_id).second) {
      throw IngestionError(source, query.query_id, "query_id", "duplicate query id");
    }
    scene.queries.push_back(std::move(query));
  }
  return scene;
}

SceneFile ingest_scene_file(const std::filesystem::path& path) {
  const std::string source = path.filename().string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(source, "", "", "cannot open " + path.string());
  json document;
  try {
    document = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IngestionError(source, "", "", std::string("invalid JSON: ") + e.what());
  }
  return parse_scene(document, source);
}

json scene_to_json(const SceneFile& scene) {
  json queries = json::array();
  for (const RawQuery& query : scene.queries) {
    queries.push_back({{"query_id", query.query_id},
                       {"scores", query.scores},
                       {"true_label", query.true_label}});
  }
  return {{"scene_id", scene.scene_id}, {"labels", scene.labels}, {"queries", queries}};
}

void write_scene_file(const SceneFile& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << scene_to_json(scene).dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<SceneFile> ingest_scene_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IngestionError(dir.string(), "", "", "not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto& path = entry.path();
    if (path.extension() != ".json" || path.filename() == "run_config.json") continue;
    files.push_back(path);
  }
  std::sort(files.begin(), files.end());

  std::vector<SceneFile> scenes;
  std::unordered_map<std::string, std::string> owner;
  for (const auto& path : files) {
    SceneFile scene = ingest_scene_file(path);
    for (const RawQuery& query : scene.queries) {
      auto [it, inserted] = owner.emplace(query.query_id, scene.source);
      if (!inserted) {
        throw IngestionError(scene.source, query.query_id, "query_id",
                             "duplicate query id, first seen in " + it->second);
      }
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::string_view to_string(NormalizationMode mode) {
  switch (mode) {
    case NormalizationMode::kNone:
      return "none";
    case NormalizationMode::kMinMax:
      return "min-max";
    case NormalizationMode::kSoftmax:
      return "softmax";
  }
  return "?";
}

NormalizationMode parse_normalization_mode(std::string_view name) {
  if (name == "none") return NormalizationMode::kNone;
  if (name == "min-max" || name == "min_max" || name == "minmax") {
    return NormalizationMode::kMinMax;
  }
  if (name == "softmax") return NormalizationMode::kSoftmax;
  throw DomainError("unknown normalization mode '" + std::string(name) +
                    "' (expected none, min-max or softmax)");
}

ScoreNormalization ScoreNormalization::None() {
  ScoreNormalization norm;
  norm.mode = NormalizationMode::kNone;
  return norm;
}

ScoreNormalization ScoreNormalization::Softmax(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError("softmax temperature must be a positive finite number");
  }
  ScoreNormalization norm;
  norm.mode = NormalizationMode::kSoftmax;
  norm.temperature = temperature;
  return norm;
}

ScoreNormalization ScoreNormalization::MinMax(double min, double max) {
  if (!std::isfinite(min) || !std::isfinite(max)) {
    throw DomainError("min-max range must be finite");
  }
  if (!(max > min)) {
    throw DomainError("degenerate min-max range: max (" + std::to_string(max) +
                      ") must exceed min (" + std::to_string(min) + ")");
  }
  ScoreNormalization norm;
  norm.mode = NormalizationMode::kMinMax;
  norm.min = min;
  norm.max = max;
  return norm;
}

ScoreNormalization ScoreNormalization::FitMinMax(std::span<const SceneFile> scenes) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const SceneFile& scene : scenes) {
    for (const RawQuery& query : scene.queries) {
      for (double x : query.scores) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
  }
  if (lo > hi) throw DomainError("cannot fit min-max normalization on zero scores");
  return MinMax(lo, hi);
}

json ScoreNormalization::to_json() const {
  switch (mode) {
    case NormalizationMode::kNone:
      return {{"mode", "none"}};
    case NormalizationMode::kMinMax:
      return {{"mode", "min-max"}, {"min", min}, {"max", max}};
    case NormalizationMode::kSoftmax:
      return {{"mode", "softmax"}, {"temperature", temperature}};
  }
  return {};
}

ScoreNormalization ScoreNormalization::from_json(const json& document) {
  if (!document.is_object() || !document.contains("mode") || !document["mode"].is_string()) {
    throw DomainError("normalization must be an object with a string 'mode'");
  }
  switch (parse_normalization_mode(document["mode"].get<std::string>())) {
    case NormalizationMode::kNone:
      return None();
    case NormalizationMode::kMinMax:
      return MinMax(FiniteOrThrow(document.value("min", json()), "min"),
                    FiniteOrThrow(document.value("max", json()), "max"));
    case NormalizationMode::kSoftmax:
      return Softmax(FiniteOrThrow(document.value("temperature", json(1.0)), "temperature"));
  }
  throw DomainError("unreachable normalization mode");
}

std::vector<double> normalize_scores(std::span<const double> raw_scores,
                                     const ScoreNormalization& norm) {
  std::vector<double> out(raw_scores.begin(), raw_scores.end());
  switch (norm.mode) {
    case NormalizationMode::kNone:
      for (double x : out) {
        if (!(x >= 0.0 && x <= 1.0)) {
          throw DomainError("score " + std::to_string(x) +
                            " is outside [0, 1] and normalization is 'none'");
        }
      }
      break;
    case NormalizationMode::kMinMax: {
      if (!(norm.max > norm.min)) throw DomainError("degenerate min-max range");
      const double width = norm.max - norm.min;
      for (double& x : out) x = std::clamp((x - norm.min) / width, 0.0, 1.0);
      break;
    }
    case NormalizationMode::kSoftmax: {
      if (out.empty()) break;
      if (!(norm.temperature > 0.0)) throw DomainError("softmax temperature must be positive");
      const double peak = *std::max_element(out.begin(), out.end());
      double total = 0.0;
      for (double& x : out) {
        x = std::exp((x - peak) / norm.temperature);
        total += x;
      }
      for (double& x : out) x /= total;
      break;
    }
  }
  return out;
}

std::vector<LabeledQuery> normalize_scene(const SceneFile& scene,
                                          const ScoreNormalization& norm) {
  std::vector<LabeledQuery> out;
  out.reserve(scene.queries.size());
  for (const RawQuery& query : scene.queries) {
    if (query.true_label >= query.scores.size()) {
      throw IngestionError(scene.source, query.query_id, "true_label",
                           std::to_string(query.true_label) + " >= K = " +
                               std::to_string(query.scores.size()));
    }
    try {
      out.push_back({query.query_id, scene.scene_id,
                     ScoreVector(normalize_scores(query.scores, norm)), query.true_label});
    } catch (const DomainError& e) {
      throw IngestionError(scene.source, query.query_id, "scores", e.what());
    }
  }
  return out;
}

std::vector<LabeledQuery> normalize_scenes(std::span<const SceneFile> scenes,
                                           const ScoreNormalization& norm) {
  std::vector<LabeledQuery> out;
  for (const SceneFile& scene : scenes) {
    auto queries = normalize_scene(scene, norm);
    std::move(queries.begin(), queries.end(), std::back_inserter(out));
  }
  return out;
}

RawScoredDataset build_raw_dataset(std::span<const LabeledQuery> queries) {
  RawScoredDataset raw;
  for (const LabeledQuery& query : queries) {
    for (LabelIndex label : rank_labels(query.scores)) {
      raw.records.push_back({nonconformity(query.scores[label]), query.query_id, label});
    }
  }
  return raw;
}

CalibrationSet filter_true_labels(const RawScoredDataset& raw,
                                  std::span<const LabeledQuery> queries) {
  std::unordered_map<std::string, LabelIndex> true_label;
  for (const LabeledQuery& query : queries) {
    if (!true_label.emplace(query.query_id, query.true_label).second) {
      throw ConsistencyError("query id '" + query.query_id + "' appears twice");
    }
  }
  std::unordered_map<std::string, double> kept;
  for (const ScoredRecord& record : raw.records) {
    auto it = true_label.find(record.query_id);
    if (it != true_label.end() && it->second == record.label) {
      kept.emplace(record.query_id, record.nonconformity);
    }
  }

  CalibrationSet calibration;
  calibration.scores.reserve(queries.size());
  calibration.provenance.reserve(queries.size());
  for (const LabeledQuery& query : queries) {
    auto it = kept.find(query.query_id);
    if (it == kept.end()) {
      throw ConsistencyError("no scored record for the true label " +
                             std::to_string(query.true_label) + " of query '" +
                             query.query_id + "'");
    }
    calibration.scores.push_back(it->second);
    calibration.provenance.push_back(query.query_id);
  }
  return calibration;
}

QuantileThreshold calibrate_quantile(const CalibrationSet& calibration, ErrorRate alpha) {
  return calibrate_quantile(std::span<const double>(calibration.scores), alpha);
}

json CalibrationArtifact::to_json() const {
  return {{"format", kArtifactFormat},
          {"n", calibration.size()},
          {"scores", calibration.scores},
          {"provenance", calibration.provenance},
          {"sources", sources},
          {"normalization", normalization.to_json()}};
}

CalibrationArtifact CalibrationArtifact::from_json(const json& document) {
  try {
    if (document.at("format").get<std::string>() != kArtifactFormat) {
      throw ConsistencyError("unsupported calibration artifact format");
    }
    CalibrationArtifact artifact;
    artifact.calibration.scores = document.at("scores").get<std::vector<double>>();
    artifact.calibration.provenance =
        document.at("provenance").get<std::vector<std::string>>();
    artifact.sources = document.at("sources").get<std::vector<std::string>>();
    artifact.normalization = ScoreNormalization::from_json(document.at("normalization"));
    const auto n = document.at("n").get<std::size_t>();
    if (n != artifact.calibration.size() ||
        artifact.calibration.provenance.size() != artifact.calibration.size()) {
      throw ConsistencyError("calibration artifact sizes disagree");
    }
    for (double s : artifact.calibration.scores) {
      if (!(s >= 0.0 && s <= 1.0)) {
        throw ConsistencyError("calibration artifact holds a score outside [0, 1]");
      }
    }
    return artifact;
  } catch (const json::exception& e) {
    throw ConsistencyError(std::string("malformed calibration artifact: ") + e.what());
  }
}

}  // namespace confset
