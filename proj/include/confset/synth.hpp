#pragma once

// Synthetic exchangeable scene data and a Monte Carlo check of the
// finite-sample coverage band 1 - alpha <= P(Y in C(X)) <= 1 - alpha + 1/(n+1).
//
// Each scene has K labels with unit prototype vectors. A fraction
// `confusability` of labels are near-duplicates of an earlier label in the
// same scene. A query drawn for true label y scores label j as
//   softmax_j( (cos(p_y, p_j) + N(0, noise_scale^2)) / temperature ).
// Every query is an independent draw from this process, so calibration and
// test queries are exchangeable.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "confset/calibration.hpp"
#include "confset/cp_core.hpp"
#include "json.hpp"

namespace confset {

struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::size_t n_scenes = 10;
  // K is drawn uniformly from [rooms_min, rooms_max] per scene.
  std::size_t rooms_min = 8;
  std::size_t rooms_max = 8;
  std::size_t queries_per_scene = 20;
  double noise_scale = 1.0;
  double temperature = 1.0;
  double confusability = 0.0;

  // Throws DomainError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
};

std::vector<SceneFile> generate_dataset(const GeneratorConfig& config);

struct CoverageReport {
  double alpha = 0.0;
  Construction construction = Construction::kThreshold;
  std::size_t n_trials = 0;
  std::size_t n_cal = 0;
  std::size_t n_test = 0;
  double mean_coverage = 0.0;
  // Sample standard deviation of per-trial coverage.
  double coverage_stddev = 0.0;
  double band_low = 0.0;   // 1 - alpha
  double band_high = 0.0;  // 1 - alpha + 1 / (n_cal + 1)
  std::vector<double> trial_coverage;
  std::vector<std::string> warnings;

  double standard_error() const;
  // Mean coverage inside [band_low, band_high] widened by `sigmas` standard errors.
  bool within_band(double sigmas = 3.0) const;
  nlohmann::json to_json() const;
};

// Each trial draws n_cal + n_test fresh queries (scenes fixed by the config
// seed, per-trial randomness from a seed derived from (seed, trial)),
// calibrates on the first n_cal and measures coverage on the rest. Scores are
// used as generated (already in [0, 1]). Results do not depend on `threads`.
CoverageReport coverage_monte_carlo(const GeneratorConfig& config, double alpha,
                                    std::size_t n_trials, std::size_t n_cal,
                                    std::size_t n_test, Construction construction,
                                    unsigned threads = 1);

}  // namespace confset
