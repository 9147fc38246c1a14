#include "confset/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "confset/errors.hpp"
#include "confset/parallel.hpp"

namespace confset {
namespace {

constexpr std::size_t kPrototypeDim = 16;
// Spread of a near-duplicate prototype around its parent, before renormalizing.
constexpr double kDuplicateJitter = 0.25;

// Stream tags keep scene structure and per-trial draws independent.
constexpr std::uint64_t kSceneStream = 1;
constexpr std::uint64_t kTrialStream = 2;
constexpr std::uint64_t kQueryStream = 3;

std::mt19937_64 DerivedEngine(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

using Vec = std::vector<double>;

Vec Normalized(Vec v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double Dot(const Vec& a, const Vec& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += a[i] * b[i];
  return total;
}

struct SceneModel {
  std::string scene_id;
  // affinity[y][j] = cos(p_y, p_j).
  std::vector<Vec> affinity;

  std::size_t label_count() const { return affinity.size(); }
};

SceneModel MakeScene(const GeneratorConfig& config, std::size_t index) {
  std::mt19937_64 rng = DerivedEngine(config.seed, kSceneStream, index);
  std::uniform_int_distribution<std::size_t> room_count(config.rooms_min, config.rooms_max);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution duplicate(config.confusability);

  const std::size_t k = room_count(rng);
  std::vector<Vec> prototypes;
  for (std::size_t j = 0; j < k; ++j) {
    Vec p(kPrototypeDim);
    if (j > 0 && duplicate(rng)) {
      std::uniform_int_distribution<std::size_t> parent(0, j - 1);
      p = prototypes[parent(rng)];
      for (double& x : p) x += kDuplicateJitter * gauss(rng);
    } else {
      for (double& x : p) x = gauss(rng);
    }
    prototypes.push_back(Normalized(std::move(p)));
  }

  char id[32];
  std::snprintf(id, sizeof(id), "scene_%03zu", index);
  SceneModel scene{id, std::vector<Vec>(k, Vec(k))};
  for (std::size_t y = 0; y < k; ++y) {
    for (std::size_t j = 0; j < k; ++j) {
      scene.affinity[y][j] = y == j ? 1.0 : Dot(prototypes[y], prototypes[j]);
    }
  }
  return scene;
}

RawQuery DrawQuery(const SceneModel& scene, const GeneratorConfig& config,
                   std::mt19937_64& rng, std::string query_id) {
  const std::size_t k = scene.label_count();
  std::uniform_int_distribution<std::size_t> label(0, k - 1);
  std::normal_distribution<double> noise(0.0, 1.0);

  RawQuery query;
  query.query_id = std::move(query_id);
  query.true_label = label(rng);
  Vec logits(k);
  for (std::size_t j = 0; j < k; ++j) {
    logits[j] = scene.affinity[query.true_label][j] + config.noise_scale * noise(rng);
  }
  query.scores = normalize_scores(logits, ScoreNormalization::Softmax(config.temperature));
  return query;
}

std::string LabelName(std::size_t j) { return "room_" + std::to_string(j); }

}  // namespace

void GeneratorConfig::validate() const {
  if (n_scenes == 0) throw DomainError("scenes must be at least 1");
  if (rooms_min == 0) throw DomainError("rooms must be at least 1");
  if (rooms_max < rooms_min) throw DomainError("rooms_max must be >= rooms_min");
  if (queries_per_scene == 0) throw DomainError("queries per scene must be at least 1");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw DomainError("noise scale must be a finite number >= 0");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError("temperature must be a finite number > 0");
  }
  if (!(confusability >= 0.0 && confusability <= 1.0)) {
    throw DomainError("confusability must lie in [0, 1]");
  }
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"seed", seed},
          {"n_scenes", n_scenes},
          {"rooms_min", rooms_min},
          {"rooms_max", rooms_max},
          {"queries_per_scene", queries_per_scene},
          {"noise_scale", noise_scale},
          {"temperature", temperature},
          {"confusability", confusability}};
}

std::vector<SceneFile> generate_dataset(const GeneratorConfig& config) {
  config.validate();
  std::vector<SceneFile> out;
  out.reserve(config.n_scenes);
  for (std::size_t s = 0; s < config.n_scenes; ++s) {
    const SceneModel model = MakeScene(config, s);
    // Query draws use their own stream so they do not shift with K.
    std::mt19937_64 rng = DerivedEngine(config.seed, kQueryStream, s);
    SceneFile scene;
    scene.scene_id = model.scene_id;
    scene.source = model.scene_id + ".json";
    for (std::size_t j = 0; j < model.label_count(); ++j) scene.labels.push_back(LabelName(j));
    for (std::size_t q = 0; q < config.queries_per_scene; ++q) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s/q%04zu", model.scene_id.c_str(), q);
      scene.queries.push_back(DrawQuery(model, config, rng, id));
    }
    out.push_back(std::move(scene));
  }
  return out;
}

double CoverageReport::standard_error() const {
  return n_trials > 0 ? coverage_stddev / std::sqrt(static_cast<double>(n_trials)) : 0.0;
}

bool CoverageReport::within_band(double sigmas) const {
  const double slack = sigmas * standard_error();
  return mean_coverage >= band_low - slack && mean_coverage <= band_high + slack;
}

nlohmann::json CoverageReport::to_json() const {
  return {{"alpha", alpha},
          {"construction", std::string(to_string(construction))},
          {"n_trials", n_trials},
          {"n_cal", n_cal},
          {"n_test", n_test},
          {"mean_coverage", mean_coverage},
          {"coverage_stddev", coverage_stddev},
          {"standard_error", standard_error()},
          {"theoretical_band", {band_low, band_high}},
          {"within_band", within_band()},
          {"warnings", warnings}};
}

CoverageReport coverage_monte_carlo(const GeneratorConfig& config, double alpha,
                                    std::size_t n_trials, std::size_t n_cal,
                                    std::size_t n_test, Construction construction,
                                    unsigned threads) {
  config.validate();
  const ErrorRate rate(alpha);
  if (n_trials == 0) throw DomainError("n_trials must be at least 1");
  if (n_cal < 10) throw DomainError("n_cal must be at least 10");
  if (n_test == 0) throw DomainError("n_test must be at least 1");

  CoverageReport report;
  report.alpha = alpha;
  report.construction = construction;
  report.n_trials = n_trials;
  report.n_cal = n_cal;
  report.n_test = n_test;
  report.band_low = 1.0 - alpha;
  report.band_high = 1.0 - alpha + 1.0 / static_cast<double>(n_cal + 1);
  if (n_trials < 100) {
    report.warnings.push_back("n_trials = " + std::to_string(n_trials) +
                              " < 100: the Monte Carlo estimate is statistically weak");
  }
  if (config.noise_scale == 0.0) {
    report.warnings.push_back(
        "noise_scale = 0: calibration scores are atomic and tie, so the upper "
        "coverage bound need not hold");
  }

  std::vector<SceneModel> scenes;
  for (std::size_t s = 0; s < config.n_scenes; ++s) scenes.push_back(MakeScene(config, s));

  report.trial_coverage.resize(n_trials);
  parallel_for(n_trials, threads, [&](std::size_t trial) {
    std::mt19937_64 rng = DerivedEngine(config.seed, kTrialStream, trial);
    std::uniform_int_distribution<std::size_t> pick(0, scenes.size() - 1);
    std::vector<double> calibration;
    calibration.reserve(n_cal);
    for (std::size_t i = 0; i < n_cal; ++i) {
      const RawQuery q = DrawQuery(scenes[pick(rng)], config, rng, {});
      calibration.push_back(nonconformity(q.scores[q.true_label]));
    }
    const QuantileThreshold threshold = calibrate_quantile(calibration, rate);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < n_test; ++i) {
      RawQuery q = DrawQuery(scenes[pick(rng)], config, rng, {});
      const LabelIndex truth = q.true_label;
      covered += predict_set(ScoreVector(std::move(q.scores)), threshold, construction)
                     .contains(truth);
    }
    report.trial_coverage[trial] =
        static_cast<double>(covered) / static_cast<double>(n_test);
  });

  double total = 0.0;
  for (double c : report.trial_coverage) total += c;
  report.mean_coverage = total / static_cast<double>(n_trials);
  if (n_trials > 1) {
    double squares = 0.0;
    for (double c : report.trial_coverage) {
      squares += (c - report.mean_coverage) * (c - report.mean_coverage);
    }
    report.coverage_stddev = std::sqrt(squares / static_cast<double>(n_trials - 1));
  }
  return report;
}

}  // namespace confset
