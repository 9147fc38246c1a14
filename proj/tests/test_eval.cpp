#include <gtest/gtest.h>

#include <random>

#include "confset/errors.hpp"
#include "confset/eval.hpp"
#include "support/oracles.hpp"
#include "support/tmpdir.hpp"

namespace confset {
namespace {

using nlohmann::json;

LabeledQuery Query(std::string id, std::vector<double> f, LabelIndex truth) {
  return {std::move(id), "scene", ScoreVector(std::move(f)), truth};
}

PredictionSet SetOf(std::vector<LabelIndex> labels) {
  return {std::move(labels), Construction::kThreshold,
          QuantileThreshold::Finite(0.5, 0.1, 1, 1)};
}

// Five queries, mixed K, top-1 correct for q0, q2, q3.
std::vector<LabeledQuery> FiveQueryFixture() {
  return {Query("q0", {0.7, 0.2, 0.1}, 0), Query("q1", {0.6, 0.4}, 1),
          Query("q2", {0.1, 0.2, 0.3, 0.4}, 3), Query("q3", {0.5, 0.45, 0.05}, 0),
          Query("q4", {0.3, 0.3, 0.4}, 0)};
}

CalibrationSet Calibration(std::vector<double> scores) {
  CalibrationSet cal;
  cal.scores = std::move(scores);
  for (std::size_t i = 0; i < cal.scores.size(); ++i) cal.provenance.push_back("c" + std::to_string(i));
  return cal;
}

TEST(EvaluateQuery, Examples) {
  const auto a = evaluate_query(SetOf({2, 5}), 5, 10);
  EXPECT_TRUE(a.success);
  EXPECT_TRUE(a.help);
  EXPECT_EQ(a.normalized_set_size, 0.2);

  const auto b = evaluate_query(SetOf({3}), 3, 4);
  EXPECT_TRUE(b.success);
  EXPECT_FALSE(b.help);
  EXPECT_EQ(b.normalized_set_size, 0.25);

  const auto c = evaluate_query(SetOf({1}), 4, 4);
  EXPECT_FALSE(c.success);
  EXPECT_FALSE(c.help);

  const auto empty = evaluate_query(SetOf({}), 0, 3);
  EXPECT_FALSE(empty.success);
  EXPECT_FALSE(empty.help);
  EXPECT_EQ(empty.set_size, 0u);
}

TEST(Aggregate, Examples) {
  std::vector<QueryOutcome> outcomes(4);
  const bool success[] = {true, false, true, true};
  for (int i = 0; i < 4; ++i) outcomes[i].success = success[i];
  const auto point = aggregate(outcomes, 0.3);
  EXPECT_EQ(point.success_rate, 0.75);
  EXPECT_EQ(point.help_rate, 0.0);
  EXPECT_EQ(point.n_queries, 4u);
  EXPECT_EQ(point.alpha, 0.3);

  const std::vector<QueryOutcome> sized{evaluate_query(SetOf({0}), 0, 2),
                                        evaluate_query(SetOf({0, 1, 2}), 0, 4)};
  EXPECT_EQ(aggregate(sized, 0.0).mean_normalized_set_size, 0.625);
  EXPECT_EQ(aggregate(sized, 0.0).help_rate, 0.5);

  EXPECT_THROW(aggregate({}, 0.1), DomainError);
}

TEST(Aggregate, EqualsIndependentMeanOfOutcomes) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<QueryOutcome> outcomes;
    std::size_t successes = 0, helps = 0;
    double ratio_total = 0.0;
    for (int i = 0; i < 1 + trial; ++i) {
      const std::size_t k = 1 + rng() % 8;
      std::vector<LabelIndex> labels;
      for (LabelIndex j = 0; j < k; ++j) {
        if (rng() % 2) labels.push_back(j);
      }
      const LabelIndex truth = rng() % k;
      outcomes.push_back(evaluate_query(SetOf(labels), truth, k));
      successes += std::find(labels.begin(), labels.end(), truth) != labels.end();
      helps += labels.size() > 1;
      ratio_total += static_cast<double>(labels.size()) / static_cast<double>(k);
    }
    const auto point = aggregate(outcomes, 0.0);
    const double n = static_cast<double>(outcomes.size());
    ASSERT_EQ(point.success_rate, successes / n);
    ASSERT_EQ(point.help_rate, helps / n);
    ASSERT_EQ(point.mean_normalized_set_size, ratio_total / n);
  }
}

TEST(AlphaGrid, DefaultHas101StrictlyIncreasingPoints) {
  const auto grid = default_alpha_grid();
  ASSERT_EQ(grid.size(), 101u);
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_EQ(grid.back(), 1.0);
  EXPECT_EQ(grid[10], 0.1);
  for (std::size_t i = 1; i < grid.size(); ++i) ASSERT_LT(grid[i - 1], grid[i]);
  EXPECT_THROW(default_alpha_grid(1), DomainError);
}

TEST(AlphaSweep, AlphaZeroCoversEverything) {
  const auto test = FiveQueryFixture();
  const std::vector<double> alphas{0.0};
  const auto curve = alpha_sweep(Calibration({0.2, 0.5, 0.9}), test, alphas,
                                 Construction::kRanked);
  ASSERT_EQ(curve.points.size(), 1u);
  EXPECT_EQ(curve.points[0].success_rate, 1.0);
  EXPECT_EQ(curve.points[0].mean_normalized_set_size, 1.0);
}

TEST(AlphaSweep, AlphaOneRankedIsTopOne) {
  const auto test = FiveQueryFixture();
  // Brute force: the top-1 label of each query by hand.
  const LabelIndex top1[] = {0, 0, 3, 0, 2};
  double correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) correct += top1[i] == test[i].true_label;

  const std::vector<double> alphas{1.0};
  const auto cal = Calibration({0.05, 0.3, 0.6, 0.65});
  const auto curve = alpha_sweep(cal, test, alphas, Construction::kRanked);
  EXPECT_EQ(curve.points[0].help_rate, 0.0);
  EXPECT_EQ(curve.points[0].success_rate, correct / 5.0);

  const auto q = calibrate_quantile(cal, ErrorRate(1.0));
  const auto sets = predict_all(test, q, Construction::kRanked);
  for (std::size_t i = 0; i < test.size(); ++i) {
    EXPECT_EQ(sets[i].labels, (std::vector<LabelIndex>{top1[i]}));
  }
  const auto threshold = alpha_sweep(cal, test, alphas, Construction::kThreshold);
  EXPECT_EQ(threshold.points[0].success_rate, 0.0);
  EXPECT_EQ(threshold.points[0].mean_normalized_set_size, 0.0);
}

TEST(AlphaSweep, Errors) {
  const auto test = FiveQueryFixture();
  const auto cal = Calibration({0.1, 0.2});
  const std::vector<double> none;
  const std::vector<double> unsorted{0.2, 0.1};
  const std::vector<double> bad{0.1, 1.2};
  const std::vector<double> ok{0.1};
  EXPECT_THROW(alpha_sweep(cal, test, none, Construction::kRanked), DomainError);
  EXPECT_THROW(alpha_sweep(cal, test, unsorted, Construction::kRanked), DomainError);
  EXPECT_THROW(alpha_sweep(cal, test, bad, Construction::kRanked), DomainError);
  EXPECT_THROW(alpha_sweep(cal, {}, ok, Construction::kRanked), DomainError);
}

std::vector<LabeledQuery> RandomSplit(std::mt19937_64& rng, std::size_t count) {
  std::vector<LabeledQuery> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = 2 + rng() % 7;
    out.push_back(Query("t" + std::to_string(i), testing::RandomScores(rng, k), rng() % k));
  }
  return out;
}

TEST(AlphaSweep, MonotoneAnchoredAndThreadIndependent) {
  std::mt19937_64 rng(32);
  const auto grid = default_alpha_grid();
  for (int trial = 0; trial < 10; ++trial) {
    const auto cal_queries = RandomSplit(rng, 40);
    const auto cal = filter_true_labels(build_raw_dataset(cal_queries), cal_queries);
    const auto test = RandomSplit(rng, 60);
    for (Construction c : {Construction::kThreshold, Construction::kRanked}) {
      const auto curve = alpha_sweep(cal, test, grid, c, 1);
      EXPECT_EQ(curve, alpha_sweep(cal, test, grid, c, 4));
      EXPECT_EQ(curve.points.front().success_rate, 1.0);
      for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        ASSERT_LE(b.success_rate, a.success_rate);
        ASSERT_LE(b.help_rate, a.help_rate);
        ASSERT_LE(b.mean_normalized_set_size, a.mean_normalized_set_size);
      }
      if (c == Construction::kRanked) {
        const auto no_help = baseline_no_help(test);
        EXPECT_EQ(curve.points.back().success_rate, no_help.success_rate);
        EXPECT_EQ(curve.points.back().help_rate, 0.0);
        EXPECT_EQ(curve.points.back().mean_normalized_set_size,
                  *no_help.mean_normalized_set_size);
      }
    }
  }
}

TEST(BaselineNoHelp, Examples) {
  const std::vector<LabeledQuery> hit{Query("a", {0.9, 0.1}, 0)};
  const std::vector<LabeledQuery> miss{Query("a", {0.9, 0.1}, 1)};
  EXPECT_EQ(baseline_no_help(hit).success_rate, 1.0);
  EXPECT_EQ(baseline_no_help(miss).success_rate, 0.0);
  const auto test = FiveQueryFixture();
  const auto result = baseline_no_help(test);
  EXPECT_EQ(result.help_rate, 0.0);
  EXPECT_EQ(result.name, BaselineKind::kNoHelp);
  double mean_inverse_k = 0.0;
  for (const auto& q : test) mean_inverse_k += 1.0 / static_cast<double>(q.label_count());
  EXPECT_DOUBLE_EQ(*result.mean_normalized_set_size, mean_inverse_k / 5.0);
}

TEST(BaselineFixture, PromptSetMembership) {
  const std::vector<LabeledQuery> test{Query("q1", {0.2, 0.3, 0.5}, 2)};
  const auto result = score_baseline_fixture(
      json{{"name", "PROMPT_SET"}, {"entries", {{"q1", {0, 2}}}}}, test);
  EXPECT_EQ(result.name, BaselineKind::kPromptSet);
  EXPECT_EQ(result.success_rate, 1.0);
  EXPECT_EQ(result.help_rate, 1.0);
  EXPECT_DOUBLE_EQ(*result.mean_normalized_set_size, 2.0 / 3.0);
}

TEST(BaselineFixture, BinarySetScoring) {
  const std::vector<LabeledQuery> test{Query("q1", {0.2, 0.8}, 0), Query("q2", {0.2, 0.8}, 0),
                                       Query("q3", {0.2, 0.8}, 1)};
  const auto result = score_baseline_fixture(
      json{{"name", "BINARY_SET"},
           {"entries", {{"q1", "uncertain"}, {"q2", "certain"}, {"q3", "certain"}}}},
      test);
  EXPECT_FALSE(result.mean_normalized_set_size.has_value());
  ASSERT_EQ(result.outcomes.size(), 3u);
  EXPECT_TRUE(result.outcomes[0].success);
  EXPECT_TRUE(result.outcomes[0].help);
  EXPECT_FALSE(result.outcomes[1].success);  // certain but wrong top-1: silent failure
  EXPECT_FALSE(result.outcomes[1].help);
  EXPECT_TRUE(result.outcomes[2].success);
  EXPECT_DOUBLE_EQ(result.success_rate, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(result.help_rate, 1.0 / 3.0);

  const auto all_uncertain = score_baseline_fixture(
      json{{"name", "BINARY_SET"},
           {"entries", {{"q1", "uncertain"}, {"q2", "uncertain"}, {"q3", "uncertain"}}}},
      test);
  EXPECT_EQ(all_uncertain.success_rate, 1.0);
  EXPECT_EQ(all_uncertain.help_rate, 1.0);
}

TEST(BaselineFixture, MismatchListsIds) {
  const std::vector<LabeledQuery> test{Query("q1", {0.2, 0.8}, 0), Query("q2", {0.4, 0.6}, 1)};
  try {
    score_baseline_fixture(json{{"name", "PROMPT_SET"},
                                {"entries", {{"q1", {0}}, {"ghost", {1}}}}},
                           test);
    FAIL();
  } catch (const ConsistencyError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("missing: q2"), std::string::npos) << what;
    EXPECT_NE(what.find("unknown: ghost"), std::string::npos) << what;
  }
  EXPECT_THROW(score_baseline_fixture(json{{"name", "PROMPT_SET"}, {"entries", {{"q1", {5}}, {"q2", {0}}}}}, test),
               ConsistencyError);
  EXPECT_THROW(score_baseline_fixture(json{{"name", "BINARY_SET"}, {"entries", {{"q1", "maybe"}, {"q2", "certain"}}}}, test),
               ConsistencyError);
  EXPECT_THROW(score_baseline_fixture(json{{"name", "ORACLE"}, {"entries", json::object()}}, test),
               ConsistencyError);
}

TradeoffCurve ThreePointCurve() {
  TradeoffCurve curve;
  curve.construction = Construction::kThreshold;
  curve.provenance = {{"a.json", "b.json"}, 40, ScoreNormalization::Softmax(0.5)};
  curve.points = {{0.0, 1.0, 1.0, 1.0, 7}, {0.1, 0.9, 2.0 / 3.0, 0.1 + 0.2, 7},
                  {1.0, 0.0, 0.0, 0.0, 7}};
  return curve;
}

TEST(ExportCurve, CsvLayout) {
  const auto dir = testing::FreshDir("export_csv");
  export_curve(ThreePointCurve(), dir / "c.csv", CurveFormat::kCsv);
  const std::string csv = testing::ReadFile(dir / "c.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "alpha,success_rate,help_rate,mean_normalized_set_size,n_queries");
  EXPECT_NE(csv.find("0.1,0.9,0.6666666666666666,0.30000000000000004,7\n"), std::string::npos)
      << csv;
}

TEST(ExportCurve, JsonRoundTripIsExact) {
  const auto dir = testing::FreshDir("export_json");
  const auto curve = ThreePointCurve();
  export_curve(curve, dir / "c.json", CurveFormat::kJson);
  EXPECT_EQ(curve_from_json(json::parse(testing::ReadFile(dir / "c.json"))), curve);
}

TEST(ExportCurve, RefusesEmptyCurveAndUnwritablePath) {
  const auto dir = testing::FreshDir("export_err");
  EXPECT_THROW(export_curve(TradeoffCurve{}, dir / "x.csv", CurveFormat::kCsv), DomainError);
  EXPECT_THROW(export_curve(ThreePointCurve(), dir / "missing" / "x.csv", CurveFormat::kCsv),
               std::runtime_error);
}

}  // namespace
}  // namespace confset
