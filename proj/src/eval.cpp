#include "confset/eval.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "confset/errors.hpp"
#include "confset/parallel.hpp"

namespace confset {
namespace {

using nlohmann::json;

QueryOutcome Score(std::span<const LabelIndex> labels, LabelIndex true_label,
                   std::size_t label_count, std::string query_id) {
  QueryOutcome outcome;
  outcome.query_id = std::move(query_id);
  outcome.set_size = labels.size();
  outcome.normalized_set_size =
      static_cast<double>(labels.size()) / static_cast<double>(label_count);
  outcome.success = std::find(labels.begin(), labels.end(), true_label) != labels.end();
  outcome.help = labels.size() > 1;
  return outcome;
}

BaselineResult Summarize(BaselineKind kind, std::vector<QueryOutcome> outcomes,
                         bool has_sets) {
  const MetricsPoint point = aggregate(outcomes, 0.0);
  BaselineResult result;
  result.name = kind;
  result.success_rate = point.success_rate;
  result.help_rate = point.help_rate;
  if (has_sets) result.mean_normalized_set_size = point.mean_normalized_set_size;
  result.n_queries = point.n_queries;
  result.outcomes = std::move(outcomes);
  return result;
}

std::string JoinIds(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  return out;
}

}  // namespace

std::string format_real(double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

QueryOutcome evaluate_query(const PredictionSet& set, LabelIndex true_label,
                            std::size_t label_count, std::string query_id) {
  return Score(set.labels, true_label, label_count, std::move(query_id));
}

MetricsPoint aggregate(std::span<const QueryOutcome> outcomes, double alpha) {
  if (outcomes.empty()) throw DomainError("cannot aggregate zero query outcomes");
  std::size_t successes = 0;
  std::size_t helps = 0;
  double size_total = 0.0;
  for (const QueryOutcome& outcome : outcomes) {
    successes += outcome.success;
    helps += outcome.help;
    size_total += outcome.normalized_set_size;
  }
  const double n = static_cast<double>(outcomes.size());
  return {alpha, static_cast<double>(successes) / n, static_cast<double>(helps) / n,
          size_total / n, outcomes.size()};
}

std::vector<double> default_alpha_grid(std::size_t points) {
  if (points < 2) throw DomainError("an alpha grid needs at least 2 points");
  std::vector<double> grid(points);
  const double last = static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = static_cast<double>(i) / last;
  return grid;
}

std::vector<PredictionSet> predict_all(std::span<const LabeledQuery> test,
                                       const QuantileThreshold& q,
                                       Construction construction) {
  std::vector<PredictionSet> sets;
  sets.reserve(test.size());
  for (const LabeledQuery& query : test) {
    sets.push_back(predict_set(query.scores, q, construction));
  }
  return sets;
}

std::vector<QueryOutcome> evaluate_all(std::span<const LabeledQuery> test,
                                       std::span<const PredictionSet> sets) {
  if (test.size() != sets.size()) {
    throw ConsistencyError("prediction set count differs from test query count");
  }
  std::vector<QueryOutcome> outcomes;
  outcomes.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    outcomes.push_back(evaluate_query(sets[i], test[i].true_label, test[i].label_count(),
                                      test[i].query_id));
  }
  return outcomes;
}

TradeoffCurve alpha_sweep(const CalibrationSet& calibration,
                          std::span<const LabeledQuery> test,
                          std::span<const double> alphas, Construction construction,
                          unsigned threads) {
  if (alphas.empty()) throw DomainError("alpha grid is empty");
  if (test.empty()) throw DomainError("test split is empty");
  if (calibration.empty()) throw DomainError("calibration set is empty");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    ErrorRate checked(alphas[i]);
    if (i > 0 && !(alphas[i] > alphas[i - 1])) {
      throw DomainError("alpha grid must be strictly increasing");
    }
  }

  TradeoffCurve curve;
  curve.construction = construction;
  curve.provenance.calibration_size = calibration.size();
  curve.points.resize(alphas.size());
  parallel_for(alphas.size(), threads, [&](std::size_t i) {
    const QuantileThreshold q = calibrate_quantile(calibration, ErrorRate(alphas[i]));
    const auto sets = predict_all(test, q, construction);
    curve.points[i] = aggregate(evaluate_all(test, sets), alphas[i]);
  });
  return curve;
}

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kNoHelp:
      return "NO_HELP";
    case BaselineKind::kPromptSet:
      return "PROMPT_SET";
    case BaselineKind::kBinarySet:
      return "BINARY_SET";
  }
  return "?";
}

BaselineResult baseline_no_help(std::span<const LabeledQuery> test) {
  if (test.empty()) throw DomainError("test split is empty");
  std::vector<QueryOutcome> outcomes;
  outcomes.reserve(test.size());
  for (const LabeledQuery& query : test) {
    const LabelIndex top = rank_labels(query.scores).front();
    outcomes.push_back(Score(std::span(&top, 1), query.true_label, query.label_count(),
                             query.query_id));
  }
  return Summarize(BaselineKind::kNoHelp, std::move(outcomes), true);
}

BaselineResult score_baseline_fixture(const json& fixture,
                                      std::span<const LabeledQuery> test) {
  if (test.empty()) throw DomainError("test split is empty");
  if (!fixture.is_object() || !fixture.contains("name") || !fixture["name"].is_string() ||
      !fixture.contains("entries") || !fixture["entries"].is_object()) {
    throw ConsistencyError("baseline fixture needs a string 'name' and an object 'entries'");
  }
  const std::string name = fixture["name"].get<std::string>();
  BaselineKind kind;
  if (name == "PROMPT_SET") {
    kind = BaselineKind::kPromptSet;
  } else if (name == "BINARY_SET") {
    kind = BaselineKind::kBinarySet;
  } else {
    throw ConsistencyError("unknown baseline name '" + name +
                           "' (expected PROMPT_SET or BINARY_SET)");
  }

  const json& entries = fixture["entries"];
  std::unordered_map<std::string, const LabeledQuery*> by_id;
  for (const LabeledQuery& query : test) by_id.emplace(query.query_id, &query);

  std::vector<std::string> missing;
  std::vector<std::string> extra;
  for (const LabeledQuery& query : test) {
    if (!entries.contains(query.query_id)) missing.push_back(query.query_id);
  }
  for (const auto& [id, value] : entries.items()) {
    if (!by_id.contains(id)) extra.push_back(id);
  }
  if (!missing.empty() || !extra.empty()) {
    std::string message = name + " fixture does not match the test split";
    if (!missing.empty()) message += "; missing: " + JoinIds(missing);
    if (!extra.empty()) message += "; unknown: " + JoinIds(extra);
    throw ConsistencyError(message);
  }

  std::vector<QueryOutcome> outcomes;
  outcomes.reserve(test.size());
  for (const LabeledQuery& query : test) {
    const json& entry = entries[query.query_id];
    const std::size_t k = query.label_count();
    std::vector<LabelIndex> labels;
    if (kind == BaselineKind::kPromptSet) {
      if (!entry.is_array()) {
        throw ConsistencyError("PROMPT_SET entry for '" + query.query_id +
                               "' is not a list of label indices");
      }
      std::set<LabelIndex> seen;
      for (const json& label : entry) {
        if (!label.is_number_integer() || label.get<std::int64_t>() < 0 ||
            label.get<std::uint64_t>() >= k) {
          throw ConsistencyError("PROMPT_SET entry for '" + query.query_id +
                                 "' holds an invalid label index " + label.dump());
        }
        if (!seen.insert(label.get<LabelIndex>()).second) {
          throw ConsistencyError("PROMPT_SET entry for '" + query.query_id +
                                 "' repeats label " + label.dump());
        }
        labels.push_back(label.get<LabelIndex>());
      }
    } else {
      const std::string verdict = entry.is_string() ? entry.get<std::string>() : "";
      if (verdict == "certain") {
        labels.push_back(rank_labels(query.scores).front());
      } else if (verdict == "uncertain") {
        labels = rank_labels(query.scores);
      } else {
        throw ConsistencyError("BINARY_SET entry for '" + query.query_id +
                               "' must be \"certain\" or \"uncertain\"");
      }
    }
    outcomes.push_back(Score(labels, query.true_label, k, query.query_id));
  }
  return Summarize(kind, std::move(outcomes), kind == BaselineKind::kPromptSet);
}

BaselineResult ingest_baseline_fixture(const std::filesystem::path& path,
                                       std::span<const LabeledQuery> test) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path.string(), "", "", "cannot open baseline fixture");
  json fixture;
  try {
    fixture = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IngestionError(path.filename().string(), "", "",
                         std::string("invalid JSON: ") + e.what());
  }
  return score_baseline_fixture(fixture, test);
}

std::string curve_to_csv(const TradeoffCurve& curve) {
  std::string out = "alpha,success_rate,help_rate,mean_normalized_set_size,n_queries\n";
  for (const MetricsPoint& p : curve.points) {
    out += format_real(p.alpha) + ',' + format_real(p.success_rate) + ',' +
           format_real(p.help_rate) + ',' + format_real(p.mean_normalized_set_size) + ',' +
           std::to_string(p.n_queries) + '\n';
  }
  return out;
}

json curve_to_json(const TradeoffCurve& curve) {
  json points = json::array();
  for (const MetricsPoint& p : curve.points) {
    points.push_back({{"alpha", p.alpha},
                      {"success_rate", p.success_rate},
                      {"help_rate", p.help_rate},
                      {"mean_normalized_set_size", p.mean_normalized_set_size},
                      {"n_queries", p.n_queries}});
  }
  return {{"construction", std::string(to_string(curve.construction))},
          {"calibration",
           {{"n", curve.provenance.calibration_size},
            {"sources", curve.provenance.calibration_sources},
            {"normalization", curve.provenance.normalization.to_json()}}},
          {"points", points}};
}

TradeoffCurve curve_from_json(const json& document) {
  try {
    TradeoffCurve curve;
    curve.construction = parse_construction(document.at("construction").get<std::string>());
    const json& calibration = document.at("calibration");
    curve.provenance.calibration_size = calibration.at("n").get<std::size_t>();
    curve.provenance.calibration_sources =
        calibration.at("sources").get<std::vector<std::string>>();
    curve.provenance.normalization =
        ScoreNormalization::from_json(calibration.at("normalization"));
    for (const json& p : document.at("points")) {
      curve.points.push_back({p.at("alpha").get<double>(), p.at("success_rate").get<double>(),
                              p.at("help_rate").get<double>(),
                              p.at("mean_normalized_set_size").get<double>(),
                              p.at("n_queries").get<std::size_t>()});
    }
    return curve;
  } catch (const json::exception& e) {
    throw ConsistencyError(std::string("malformed tradeoff curve: ") + e.what());
  }
}

void export_curve(const TradeoffCurve& curve, const std::filesystem::path& path,
                  CurveFormat format) {
  if (curve.points.empty()) throw DomainError("refusing to export an empty curve");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (format == CurveFormat::kCsv) {
    out << curve_to_csv(curve);
  } else {
    out << curve_to_json(curve).dump(2) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace confset
