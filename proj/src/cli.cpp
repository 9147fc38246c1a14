#include "confset/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "confset/calibration.hpp"
#include "confset/errors.hpp"
#include "confset/eval.hpp"
#include "confset/synth.hpp"
#include "json.hpp"

namespace confset::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kRunConfigName = "run_config.json";

class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

void WriteText(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json ReadJson(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path.string(), "", "", "cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IngestionError(path.string(), "", "", std::string("invalid JSON: ") + e.what());
  }
}

void EchoRunConfig(const fs::path& path, const std::string& command, json flags) {
  WriteText(path, json{{"command", command}, {"flags", std::move(flags)}}.dump(2) + "\n");
}

// `<file>.run_config.json` next to a file output.
fs::path SidecarConfig(const fs::path& output) {
  fs::path sidecar = output;
  sidecar += ".run_config.json";
  return sidecar;
}

ScoreNormalization NormalizationFromFlags(const std::string& mode, double temperature) {
  try {
    switch (parse_normalization_mode(mode)) {
      case NormalizationMode::kNone:
        return ScoreNormalization::None();
      case NormalizationMode::kSoftmax:
        return ScoreNormalization::Softmax(temperature);
      case NormalizationMode::kMinMax:
        // Range is fitted on the calibration split by the caller.
        return ScoreNormalization{NormalizationMode::kMinMax, 0.0, 1.0, 1.0};
    }
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  throw UsageError("unknown normalization mode");
}

// Flags may restate the artifact's normalization but never contradict it.
void CheckNormalizationFlags(const ScoreNormalization& artifact, const CLI::Option* mode_opt,
                             const std::string& mode, const CLI::Option* temp_opt,
                             double temperature) {
  if (mode_opt->count() > 0) {
    NormalizationMode requested;
    try {
      requested = parse_normalization_mode(mode);
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
    if (requested != artifact.mode) {
      throw ConsistencyError("normalization mismatch: calibration artifact uses '" +
                             std::string(to_string(artifact.mode)) + "', flags request '" +
                             mode + "'");
    }
  }
  if (temp_opt->count() > 0 && artifact.mode == NormalizationMode::kSoftmax &&
      temperature != artifact.temperature) {
    throw ConsistencyError("normalization mismatch: calibration artifact uses temperature " +
                           format_real(artifact.temperature) + ", flags request " +
                           format_real(temperature));
  }
}

std::vector<LabeledQuery> LoadSplit(const fs::path& dir, const ScoreNormalization& norm,
                                    const char* what) {
  const auto scenes = ingest_scene_dir(dir);
  auto queries = normalize_scenes(scenes, norm);
  if (queries.empty()) {
    throw IngestionError(dir.string(), "", "", std::string(what) + " split has no queries");
  }
  return queries;
}

CalibrationArtifact LoadArtifact(const fs::path& path) {
  return CalibrationArtifact::from_json(ReadJson(path));
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  GeneratorConfig config;
  std::size_t rooms = 0;
  fs::path out;
};

int RunGenerate(GenerateArgs args, std::ostream& out) {
  if (args.rooms > 0) args.config.rooms_min = args.config.rooms_max = args.rooms;
  try {
    args.config.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  const auto scenes = generate_dataset(args.config);
  fs::create_directories(args.out);
  for (const SceneFile& scene : scenes) write_scene_file(scene, args.out / scene.source);
  json flags = args.config.to_json();
  flags["out"] = args.out.string();
  EchoRunConfig(args.out / kRunConfigName, "generate", flags);
  out << "wrote " << scenes.size() << " scene files to " << args.out.string() << "\n";
  return kExitOk;
}

struct CalibrateArgs {
  fs::path calibration_dir;
  std::string normalization = "softmax";
  double temperature = 1.0;
  fs::path out;
};

int RunCalibrate(const CalibrateArgs& args, std::ostream& out) {
  ScoreNormalization norm = NormalizationFromFlags(args.normalization, args.temperature);
  const auto scenes = ingest_scene_dir(args.calibration_dir);
  std::size_t total = 0;
  for (const SceneFile& scene : scenes) total += scene.queries.size();
  if (total == 0) {
    throw IngestionError(args.calibration_dir.string(), "", "",
                         "calibration directory holds no queries");
  }
  if (norm.mode == NormalizationMode::kMinMax) norm = ScoreNormalization::FitMinMax(scenes);

  const auto queries = normalize_scenes(scenes, norm);
  CalibrationArtifact artifact;
  artifact.calibration = filter_true_labels(build_raw_dataset(queries), queries);
  artifact.normalization = norm;
  for (const SceneFile& scene : scenes) artifact.sources.push_back(scene.source);

  WriteText(args.out, artifact.to_json().dump(2) + "\n");
  EchoRunConfig(SidecarConfig(args.out), "calibrate",
                {{"calibration_dir", args.calibration_dir.string()},
                 {"normalization", args.normalization},
                 {"temperature", args.temperature},
                 {"out", args.out.string()}});
  out << "calibrated n=" << artifact.calibration.size() << " from " << scenes.size()
      << " scene files -> " << args.out.string() << "\n";
  return kExitOk;
}

struct PredictArgs {
  fs::path calibration;
  fs::path test_dir;
  double alpha = 0.1;
  std::string construction = "ranked";
  std::string normalization;
  double temperature = 1.0;
  fs::path out;
  const CLI::Option* normalization_opt = nullptr;
  const CLI::Option* temperature_opt = nullptr;
};

int RunPredict(const PredictArgs& args, std::ostream& out, std::ostream& err) {
  const Construction construction = parse_construction(args.construction);
  const CalibrationArtifact artifact = LoadArtifact(args.calibration);
  CheckNormalizationFlags(artifact.normalization, args.normalization_opt, args.normalization,
                          args.temperature_opt, args.temperature);
  const auto test = LoadSplit(args.test_dir, artifact.normalization, "test");
  const QuantileThreshold q = calibrate_quantile(artifact.calibration, ErrorRate(args.alpha));
  const auto sets = predict_all(test, q, construction);
  const auto outcomes = evaluate_all(test, sets);

  std::ostringstream lines;
  for (std::size_t i = 0; i < test.size(); ++i) {
    lines << json{{"query_id", test[i].query_id},
                  {"scene_id", test[i].scene_id},
                  {"set", sets[i].labels},
                  {"set_size", outcomes[i].set_size},
                  {"success", outcomes[i].success},
                  {"help", outcomes[i].help}}
                 .dump()
          << '\n';
  }

  std::ostringstream summary;
  summary << "q_hat=" << q.to_string() << " alpha=" << format_real(args.alpha)
          << " rank=" << q.rank() << " n=" << q.calibration_size()
          << " construction=" << to_string(construction) << "\n";
  if (args.out.empty()) {
    out << lines.str();
    err << summary.str();
  } else {
    WriteText(args.out, lines.str());
    EchoRunConfig(SidecarConfig(args.out), "predict",
                  {{"calibration", args.calibration.string()},
                   {"test_dir", args.test_dir.string()},
                   {"alpha", args.alpha},
                   {"construction", args.construction},
                   {"out", args.out.string()}});
    out << summary.str();
  }
  return kExitOk;
}

struct SweepArgs {
  fs::path calibration;
  fs::path test_dir;
  std::string construction = "ranked";
  std::size_t grid_points = 101;
  std::vector<double> alphas;
  std::string normalization;
  double temperature = 1.0;
  unsigned threads = 1;
  fs::path out;
  const CLI::Option* normalization_opt = nullptr;
  const CLI::Option* temperature_opt = nullptr;
};

int RunSweep(const SweepArgs& args, std::ostream& out) {
  const Construction construction = parse_construction(args.construction);
  std::vector<double> alphas = args.alphas;
  if (alphas.empty()) {
    try {
      alphas = default_alpha_grid(args.grid_points);
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
  }
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0) || (i > 0 && !(alphas[i] > alphas[i - 1]))) {
      throw UsageError("--alphas must be strictly increasing values in [0, 1]");
    }
  }

  const CalibrationArtifact artifact = LoadArtifact(args.calibration);
  CheckNormalizationFlags(artifact.normalization, args.normalization_opt, args.normalization,
                          args.temperature_opt, args.temperature);
  const auto test = LoadSplit(args.test_dir, artifact.normalization, "test");

  TradeoffCurve curve =
      alpha_sweep(artifact.calibration, test, alphas, construction, args.threads);
  curve.provenance.calibration_sources = artifact.sources;
  curve.provenance.normalization = artifact.normalization;

  fs::create_directories(args.out);
  export_curve(curve, args.out / "curve.csv", CurveFormat::kCsv);
  export_curve(curve, args.out / "curve.json", CurveFormat::kJson);
  EchoRunConfig(args.out / kRunConfigName, "sweep",
                {{"calibration", args.calibration.string()},
                 {"test_dir", args.test_dir.string()},
                 {"construction", args.construction},
                 {"alphas", alphas},
                 {"threads", args.threads},
                 {"out", args.out.string()}});
  out << "swept " << curve.points.size() << " alphas over " << test.size()
      << " test queries -> " << args.out.string() << "\n";
  return kExitOk;
}

struct CompareArgs {
  fs::path test_dir;
  std::vector<fs::path> fixtures;
  fs::path sweep;
  std::vector<double> cp_alphas;
  std::string normalization = "softmax";
  double temperature = 1.0;
  fs::path out;
};

struct CompareRow {
  std::string method;
  std::optional<double> alpha;
  double success_rate;
  double help_rate;
  std::optional<double> mean_normalized_set_size;
};

// Best CP point (highest success, then smallest set size) among those asking
// for help no more often than `help_budget`.
const MetricsPoint* MatchHelpBudget(const TradeoffCurve& curve, double help_budget) {
  const MetricsPoint* best = nullptr;
  for (const MetricsPoint& p : curve.points) {
    if (p.help_rate > help_budget) continue;
    if (!best || p.success_rate > best->success_rate ||
        (p.success_rate == best->success_rate &&
         p.mean_normalized_set_size < best->mean_normalized_set_size)) {
      best = &p;
    }
  }
  return best;
}

int RunCompare(const CompareArgs& args, std::ostream& out) {
  std::optional<TradeoffCurve> curve;
  ScoreNormalization norm;
  if (!args.sweep.empty()) {
    curve = curve_from_json(ReadJson(args.sweep));
    norm = curve->provenance.normalization;
  } else {
    if (!args.cp_alphas.empty()) throw UsageError("--cp-alpha requires --sweep");
    norm = NormalizationFromFlags(args.normalization, args.temperature);
    if (norm.mode == NormalizationMode::kMinMax) {
      throw UsageError("min-max normalization needs fitted parameters; pass --sweep");
    }
  }
  const auto test = LoadSplit(args.test_dir, norm, "test");

  std::vector<BaselineResult> baselines{baseline_no_help(test)};
  for (const fs::path& fixture : args.fixtures) {
    baselines.push_back(ingest_baseline_fixture(fixture, test));
  }

  std::vector<CompareRow> rows;
  for (const BaselineResult& b : baselines) {
    rows.push_back({std::string(to_string(b.name)), std::nullopt, b.success_rate, b.help_rate,
                    b.mean_normalized_set_size});
  }
  if (curve) {
    std::vector<const MetricsPoint*> selected;
    if (!args.cp_alphas.empty()) {
      for (double alpha : args.cp_alphas) {
        const MetricsPoint* hit = nullptr;
        for (const MetricsPoint& p : curve->points) {
          if (std::abs(p.alpha - alpha) <= 1e-12) hit = &p;
        }
        if (!hit) throw UsageError("--cp-alpha " + format_real(alpha) + " is not on the sweep");
        selected.push_back(hit);
      }
    } else {
      for (const BaselineResult& b : baselines) {
        const MetricsPoint* hit = MatchHelpBudget(*curve, b.help_rate);
        if (hit && std::find(selected.begin(), selected.end(), hit) == selected.end()) {
          selected.push_back(hit);
        }
      }
    }
    const std::string method = "CP_" + std::string(curve->construction == Construction::kRanked
                                                       ? "RANKED"
                                                       : "THRESHOLD");
    for (const MetricsPoint* p : selected) {
      rows.push_back({method, p->alpha, p->success_rate, p->help_rate,
                      p->mean_normalized_set_size});
    }
  }

  std::string csv = "method,alpha,success_rate,help_rate,mean_normalized_set_size\n";
  for (const CompareRow& row : rows) {
    csv += row.method + ',' + (row.alpha ? format_real(*row.alpha) : "") + ',' +
           format_real(row.success_rate) + ',' + format_real(row.help_rate) + ',' +
           (row.mean_normalized_set_size ? format_real(*row.mean_normalized_set_size) : "") +
           '\n';
  }
  if (args.out.empty()) {
    out << csv;
  } else {
    WriteText(args.out, csv);
    std::vector<std::string> fixtures;
    for (const auto& f : args.fixtures) fixtures.push_back(f.string());
    EchoRunConfig(SidecarConfig(args.out), "compare",
                  {{"test_dir", args.test_dir.string()},
                   {"fixtures", fixtures},
                   {"sweep", args.sweep.string()},
                   {"cp_alphas", args.cp_alphas},
                   {"out", args.out.string()}});
    out << "wrote " << rows.size() << " comparison rows -> " << args.out.string() << "\n";
  }
  return kExitOk;
}

struct CoverageArgs {
  GeneratorConfig config;
  std::size_t rooms = 0;
  double alpha = 0.1;
  std::size_t n_cal = 100;
  std::size_t n_test = 200;
  std::size_t trials = 1000;
  std::string construction = "threshold";
  unsigned threads = 1;
  fs::path out;
};

int RunVerifyCoverage(CoverageArgs args, std::ostream& out, std::ostream& err) {
  if (args.rooms > 0) args.config.rooms_min = args.config.rooms_max = args.rooms;
  const Construction construction = parse_construction(args.construction);
  CoverageReport report;
  try {
    args.config.validate();
    report = coverage_monte_carlo(args.config, args.alpha, args.trials, args.n_cal,
                                  args.n_test, construction, args.threads);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  for (const std::string& w : report.warnings) err << "warning: " << w << "\n";

  const std::string text = report.to_json().dump(2) + "\n";
  if (args.out.empty()) {
    out << text;
  } else {
    WriteText(args.out, text);
    json flags = args.config.to_json();
    flags.update({{"alpha", args.alpha},
                  {"n_cal", args.n_cal},
                  {"n_test", args.n_test},
                  {"trials", args.trials},
                  {"construction", args.construction},
                  {"threads", args.threads},
                  {"out", args.out.string()}});
    EchoRunConfig(SidecarConfig(args.out), "verify-coverage", flags);
    out << "mean coverage " << format_real(report.mean_coverage) << " (band ["
        << format_real(report.band_low) << ", " << format_real(report.band_high)
        << "] +/- 3 SE = " << format_real(3.0 * report.standard_error()) << ")\n";
  }
  if (!report.within_band()) {
    err << "coverage " << format_real(report.mean_coverage)
        << " lies outside the widened theoretical band\n";
    return kExitBandViolation;
  }
  return kExitOk;
}

void AddGeneratorFlags(CLI::App* cmd, GeneratorConfig& config, std::size_t& rooms) {
  cmd->add_option("--seed", config.seed, "Master random seed")->capture_default_str();
  cmd->add_option("--scenes", config.n_scenes, "Number of scenes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  auto* fixed = cmd->add_option("--rooms", rooms, "Labels per scene (fixed K)")
                    ->check(CLI::PositiveNumber);
  cmd->add_option("--rooms-min", config.rooms_min, "Smallest K when K varies per scene")
      ->check(CLI::PositiveNumber)
      ->excludes(fixed)
      ->capture_default_str();
  cmd->add_option("--rooms-max", config.rooms_max, "Largest K when K varies per scene")
      ->check(CLI::PositiveNumber)
      ->excludes(fixed)
      ->capture_default_str();
  cmd->add_option("--noise", config.noise_scale, "Gaussian logit noise scale")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--temperature", config.temperature, "Softmax temperature")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--confusability", config.confusability,
                  "Fraction of near-duplicate labels")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
}

const auto kConstructionCheck = CLI::IsMember({"threshold", "ranked"}, CLI::ignore_case);
const auto kNormalizationCheck = CLI::IsMember({"none", "min-max", "min_max", "softmax"});

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Split conformal prediction sets for similarity-score recognizers", "confset"};
  app.require_subcommand(1);

  GenerateArgs gen_args;
  auto* gen = app.add_subcommand("generate", "Write synthetic scene files");
  AddGeneratorFlags(gen, gen_args.config, gen_args.rooms);
  gen->add_option("--queries-per-scene", gen_args.config.queries_per_scene)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--out", gen_args.out, "Output directory")->required();

  CalibrateArgs cal_args;
  auto* cal = app.add_subcommand("calibrate", "Build a calibration artifact from scenes");
  cal->add_option("--calibration-dir", cal_args.calibration_dir)->required()->check(CLI::ExistingDirectory);
  cal->add_option("--normalization", cal_args.normalization)
      ->check(kNormalizationCheck)
      ->capture_default_str();
  cal->add_option("--temperature", cal_args.temperature)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cal->add_option("--out", cal_args.out, "Artifact JSON path")->required();

  PredictArgs pred_args;
  auto* pred = app.add_subcommand("predict", "Emit per-query prediction sets (JSON lines)");
  pred->add_option("--calibration", pred_args.calibration)->required();
  pred->add_option("--test-dir", pred_args.test_dir)->required()->check(CLI::ExistingDirectory);
  pred->add_option("--alpha", pred_args.alpha)->required()->check(CLI::Range(0.0, 1.0));
  pred->add_option("--construction", pred_args.construction)
      ->check(kConstructionCheck)
      ->capture_default_str();
  pred_args.normalization_opt =
      pred->add_option("--normalization", pred_args.normalization)->check(kNormalizationCheck);
  pred_args.temperature_opt =
      pred->add_option("--temperature", pred_args.temperature)->check(CLI::PositiveNumber);
  pred->add_option("--out", pred_args.out, "JSON-lines path (default stdout)");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Alpha sweep to curve.csv / curve.json");
  sweep->add_option("--calibration", sweep_args.calibration)->required();
  sweep->add_option("--test-dir", sweep_args.test_dir)->required()->check(CLI::ExistingDirectory);
  sweep->add_option("--construction", sweep_args.construction)
      ->check(kConstructionCheck)
      ->capture_default_str();
  auto* grid = sweep->add_option("--grid-points", sweep_args.grid_points,
                                 "Evenly spaced alphas over [0, 1]")
                   ->check(CLI::Range(std::size_t{2}, std::size_t{1000000}))
                   ->capture_default_str();
  sweep->add_option("--alphas", sweep_args.alphas, "Explicit alpha grid")->excludes(grid);
  sweep_args.normalization_opt =
      sweep->add_option("--normalization", sweep_args.normalization)->check(kNormalizationCheck);
  sweep_args.temperature_opt =
      sweep->add_option("--temperature", sweep_args.temperature)->check(CLI::PositiveNumber);
  sweep->add_option("--threads", sweep_args.threads)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep->add_option("--out", sweep_args.out, "Output directory")->required();

  CompareArgs cmp_args;
  auto* cmp = app.add_subcommand("compare", "Baselines vs CP operating points (CSV)");
  cmp->add_option("--test-dir", cmp_args.test_dir)->required()->check(CLI::ExistingDirectory);
  cmp->add_option("--fixture", cmp_args.fixtures, "Baseline fixture JSON (repeatable)");
  cmp->add_option("--sweep", cmp_args.sweep, "curve.json from `sweep`");
  cmp->add_option("--cp-alpha", cmp_args.cp_alphas, "CP points to report (repeatable)");
  cmp->add_option("--normalization", cmp_args.normalization, "Used when --sweep is absent")
      ->check(kNormalizationCheck)
      ->capture_default_str();
  cmp->add_option("--temperature", cmp_args.temperature)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmp->add_option("--out", cmp_args.out, "CSV path (default stdout)");

  CoverageArgs cov_args;
  cov_args.config.n_scenes = 40;
  auto* cov = app.add_subcommand("verify-coverage", "Monte Carlo coverage check");
  AddGeneratorFlags(cov, cov_args.config, cov_args.rooms);
  cov->add_option("--alpha", cov_args.alpha)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cov->add_option("--n-cal", cov_args.n_cal)
      ->check(CLI::Range(std::size_t{10}, std::size_t{100000000}))
      ->capture_default_str();
  cov->add_option("--n-test", cov_args.n_test)->check(CLI::PositiveNumber)->capture_default_str();
  cov->add_option("--trials", cov_args.trials)->check(CLI::PositiveNumber)->capture_default_str();
  cov->add_option("--construction", cov_args.construction)
      ->check(kConstructionCheck)
      ->capture_default_str();
  cov->add_option("--threads", cov_args.threads)->check(CLI::PositiveNumber)->capture_default_str();
  cov->add_option("--out", cov_args.out, "Report JSON path (default stdout)");

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return RunGenerate(gen_args, out);
    if (*cal) return RunCalibrate(cal_args, out);
    if (*pred) return RunPredict(pred_args, out, err);
    if (*sweep) return RunSweep(sweep_args, out);
    if (*cmp) return RunCompare(cmp_args, out);
    if (*cov) return RunVerifyCoverage(cov_args, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  }
  return kExitUsage;
}

}  // namespace confset::cli
