// lcph: command-line front end for latent-class proportional-hazards models.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or input error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "lcph/io.hpp"

namespace fs = std::filesystem;
using namespace lcph;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Common {
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;

  std::uint64_t resolved_seed() {
    if (!seed) {
      std::random_device rd;
      seed = (static_cast<std::uint64_t>(rd()) << 32) | rd();
      std::cerr << "seed: " << *seed << '\n';
    }
    return *seed;
  }
};

struct ModelFlags {
  int classes = 2;
  std::vector<std::string> membership;
  std::vector<std::string> survival;
  double tolerance = 1e-7;
  int max_iterations = 5000;
  std::string init = "kmeans";
  int restarts = 1;
  bool standardize = false;

  void add_to(CLI::App& app, bool with_classes = true) {
    if (with_classes) app.add_option("-L,--classes", classes, "Number of latent classes")->capture_default_str();
    app.add_option("--membership", membership, "Covariates in the class-membership model (default: all)")
        ->delimiter(',');
    app.add_option("--survival", survival, "Covariates in the class-specific hazards (default: all)")
        ->delimiter(',');
    app.add_option("--tolerance", tolerance, "Aitken stopping tolerance")->capture_default_str();
    app.add_option("--max-iter", max_iterations, "Maximum EM iterations")->capture_default_str();
    app.add_option("--init", init, "Initialization")
        ->check(CLI::IsMember({"kmeans", "random"}))
        ->capture_default_str();
    app.add_option("--restarts", restarts, "Fits per model; extra fits start at random")
        ->capture_default_str();
    app.add_flag("--standardize", standardize, "Z-score the covariates before fitting");
  }

  ModelConfig config(const Dataset& data, std::uint64_t seed) const {
    auto lookup = [&](const std::vector<std::string>& names) {
      std::vector<Index> cols;
      for (const std::string& name : names) {
        const auto& all = data.covariate_names();
        const auto it = std::find(all.begin(), all.end(), name);
        if (it == all.end()) throw InputError("unknown covariate '" + name + "'");
        cols.push_back(static_cast<Index>(it - all.begin()));
      }
      return cols;
    };
    ModelConfig c = ModelConfig::with_all_covariates(data, classes);
    if (!membership.empty()) c.membership_covariates = lookup(membership);
    if (!survival.empty()) c.survival_covariates = lookup(survival);
    c.tolerance = tolerance;
    c.max_iterations = max_iterations;
    c.initialization = init == "random" ? Initialization::random : Initialization::kmeans;
    c.seed = seed;
    return c;
  }
};

Dataset load_data(const std::string& path, bool standardize_covariates,
                  Standardization* info = nullptr) {
  Dataset data = read_csv_file(path);
  return standardize_covariates ? standardize(data, info) : data;
}

// Writes to `path`, or stdout for "" or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

template <typename Writer>
std::string render(Writer&& write) {
  std::ostringstream s;
  write(s);
  return s.str();
}

int cmd_fit(Common& common, const ModelFlags& flags, const std::string& input,
            const std::string& output, bool skip_se) {
  FitReport report;
  report.timestamp = utc_timestamp();
  report.seed = common.resolved_seed();
  report.input = input;
  report.standardized = flags.standardize;
  const Dataset data = load_data(input, flags.standardize, &report.standardization);
  report.config = flags.config(data, report.seed);
  report.covariate_names = data.covariate_names();
  report.n = data.size();

  const EmState state = fit_with_restarts(data, report.config, flags.restarts);
  report.params = state.params;
  report.loglik_history = state.loglik_history;
  report.converged = state.converged;
  report.iterations = state.iteration;
  report.max_loglik_drop = state.max_loglik_drop;
  report.criteria = criteria(state, data, report.config);
  if (!skip_se) {
    try {
      const CovarianceResult cov = covariance(data, state, report.config, common.threads);
      report.standard_errors = cov.standard_errors();
      report.intervals = wald_intervals(cov, 0.95);
    } catch (const NumericalError& e) {
      report.covariance_error = e.what();
      std::cerr << "warning: standard errors unavailable: " << e.what() << '\n';
    }
  }
  if (!state.converged) std::cerr << "warning: EM did not converge\n";
  emit(output, to_json(report).dump(2) + "\n");
  return 0;
}

int cmd_select(Common& common, const ModelFlags& flags, const std::string& input,
               std::vector<int> candidates, const std::string& output) {
  const std::uint64_t seed = common.resolved_seed();
  const Dataset data = load_data(input, flags.standardize);
  const ModelConfig base = flags.config(data, seed);
  const SelectionResult result =
      select_num_classes(data, base, candidates, {flags.restarts, common.threads});
  for (const auto& [classes, message] : result.failed)
    std::cerr << "L=" << classes << " failed: " << message << '\n';
  if (result.table.empty()) throw NumericalError("no candidate could be fitted");
  emit(output, render([&](std::ostream& s) { write_criteria_csv(s, result.table); }));
  for (Criterion c : {Criterion::aic, Criterion::bic, Criterion::icl_bic, Criterion::entropy_index})
    std::cerr << criterion_name(c) << " selects L=" << result.best(c) << '\n';
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& input,
                std::vector<double> times, const std::string& output) {
  std::ifstream model_in(model_path);
  if (!model_in) throw InputError("cannot open '" + model_path + "'");
  nlohmann::json j;
  try {
    model_in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(model_path + ": " + e.what());
  }
  const FitReport report = fit_report_from_json(j);

  std::ifstream in(input);
  if (!in) throw InputError("cannot open '" + input + "'");
  const CovariateTable table = read_covariate_csv(in, input);
  Matrix x(table.values.rows(), static_cast<Index>(report.covariate_names.size()));
  for (std::size_t k = 0; k < report.covariate_names.size(); ++k) {
    const auto it = std::find(table.names.begin(), table.names.end(), report.covariate_names[k]);
    if (it == table.names.end())
      throw InputError(input + ": missing covariate '" + report.covariate_names[k] + "'");
    auto col = x.col(static_cast<Index>(k));
    col = table.values.col(static_cast<Index>(it - table.names.begin()));
    if (report.standardized) {
      col.array() -= report.standardization.mean[static_cast<Index>(k)];
      const double sd = report.standardization.sd[static_cast<Index>(k)];
      if (sd > 0.0) col /= sd;
    }
  }
  for (double t : times)
    if (!(t >= 0.0)) throw InputError("prediction times must be >= 0");

  const SurvivalPredictor predictor(report.params, report.config);
  const Matrix surv = predictor.survival(x, times);
  emit(output, render([&](std::ostream& s) {
         s << "row,time,survival\n" << std::setprecision(10);
         for (Index i = 0; i < surv.rows(); ++i)
           for (Index g = 0; g < surv.cols(); ++g)
             s << i + 1 << ',' << times[static_cast<std::size_t>(g)] << ',' << surv(i, g) << '\n';
       }));
  return 0;
}

int cmd_cv_brier(Common& common, const ModelFlags& flags, const std::string& input, int folds,
                 double horizon, double step, const std::string& output) {
  const std::uint64_t seed = common.resolved_seed();
  const Dataset data = load_data(input, flags.standardize);
  const ModelConfig model = flags.config(data, seed);
  ModelConfig cox = model;
  cox.num_classes = 1;
  cox.membership_covariates.clear();
  if (!(horizon > 0.0)) horizon = data.event_times().maxCoeff();
  const std::vector<double> grid =
      step > 0.0 ? regular_grid(horizon, step) : event_time_grid(data, horizon);
  if (grid.empty()) throw InputError("empty evaluation grid");
  CrossValidationOptions cv;
  cv.folds = folds;
  cv.seed = seed;
  cv.restarts = flags.restarts;
  cv.threads = common.threads;
  const CrossValidatedBrier result = cross_validated_brier(data, model, cox, grid, cv);
  for (const std::string& note : result.skipped) std::cerr << "skipped: " << note << '\n';
  std::cerr << "censoring distribution estimated on: " << result.censoring_source << '\n';
  emit(output, render([&](std::ostream& s) { write_brier_cv_csv(s, result); }));
  return 0;
}

ScenarioSpec resolve_scenario(const std::string& id, const std::string& file) {
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw InputError("cannot open '" + file + "'");
    try {
      return scenario_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(file + ": " + e.what());
    }
  }
  return ScenarioSpec::table(id);
}

int cmd_simulate(Common& common, const std::string& scenario_id, const std::string& scenario_file,
                 Index n, bool cohort_like, const std::string& output,
                 const std::string& labels_path) {
  const std::uint64_t seed = common.resolved_seed();
  SimulatedData sim = [&] {
    if (cohort_like) return generate_cohort_like(n, seed);
    ScenarioSpec spec = resolve_scenario(scenario_id, scenario_file);
    spec.n = n;
    spec.seed = seed;
    return generate(spec);
  }();
  emit(output, render([&](std::ostream& s) { write_csv(s, sim.data); }));
  if (!labels_path.empty())
    emit(labels_path, render([&](std::ostream& s) {
           s << "class\n";
           for (int label : sim.labels) s << label + 1 << '\n';
         }));
  return 0;
}

nlohmann::json manifest(const ScenarioSpec& spec, const std::string& study,
                        const StudyOptions& options, const std::vector<double>& grid) {
  nlohmann::json m;
  m["scenario"] = spec.id;
  m["study"] = study;
  m["n"] = spec.n;
  m["replicates"] = options.replicates;
  m["seed"] = options.seed;
  m["replicate_seeds"] = "seed_seq(master seed, replicate index)";
  m["init"] = init_mode_name(options.init);
  m["restarts"] = options.restarts;
  m["timestamp"] = utc_timestamp();
  m["decisions"] = {
      {"baseline_hazard",
       "data generated with cumulative baseline hazard Lambda0(t) = 0.1 (e^t - 1), "
       "i.e. hazard 0.1 e^t"},
      {"censoring", "C = min(Exponential with rate r, Uniform(5, 6))"},
      {"perturbed_truth_init", "0.9 on the true class, 0.1 / (L - 1) elsewhere"},
      {"nonconvergence_rule",
       "EM not converged, or |theta_hat - theta| > median + 5 MAD (unscaled) over replicates"},
      {"tie_rule", "selection ties go to the smaller number of classes"},
      {"censoring_survival_side", "G(T-) for observed events, G(t) for subjects still at risk"},
      {"censoring_survival_source", "Kaplan-Meier on the test fold"},
      {"brier_grid", "regular grid of step 0.25 up to the scenario horizon"},
      {"folds", "stratified by event status"},
      {"stopping", "Aitken extrapolation, tolerance 1e-7"},
      {"standard_errors", "profile likelihood, central differences with h = 5 / sqrt(n)"}};
  if (!grid.empty()) m["grid"] = grid;
  return m;
}

int cmd_reproduce(Common& common, const std::string& scenario_id, const std::string& study,
                  int replicates, Index n, const std::string& outdir, const std::string& init,
                  int restarts, bool skip_se) {
  ScenarioSpec spec = ScenarioSpec::table(scenario_id, n);
  StudyOptions options;
  options.seed = common.resolved_seed();
  options.threads = common.threads;
  options.init = parse_init_mode(init);
  options.restarts = restarts;
  options.standard_errors = !skip_se;
  if (study == "estimation")
    options.replicates = replicates > 0 ? replicates : 500;
  else if (study == "selection")
    options.replicates = replicates > 0 ? replicates : 100;
  else
    options.replicates = replicates > 0 ? replicates : 50;

  fs::create_directories(outdir);
  const std::string prefix = (fs::path(outdir) / ("scenario_" + spec.id + "_" + study)).string();
  std::vector<double> grid;

  if (study == "estimation") {
    const ReplicateSummary summary = run_replicates(spec, options);
    emit(prefix + "_estimates.csv", render([&](std::ostream& s) { write_estimation_csv(s, summary); }));
    emit(prefix + "_diagnostics.csv", render([&](std::ostream& s) { write_diagnostics_csv(s, summary); }));
    for (const std::string& m : summary.failure_messages) std::cerr << m << '\n';
  } else if (study == "selection") {
    const std::vector<int> candidates{1, 2, 3, 4};
    const SelectionStudy result = run_selection_study(spec, candidates, options);
    emit(prefix + "_frequencies.csv", render([&](std::ostream& s) { write_selection_csv(s, result); }));
  } else {
    grid = regular_grid(spec.horizon, 0.25);
    const BrierStudy result = run_brier_study(spec, grid, options);
    emit(prefix + "_long.csv", render([&](std::ostream& s) { write_brier_study_csv(s, result); }));
    for (const std::string& m : result.failure_messages) std::cerr << m << '\n';
  }
  emit(prefix + "_manifest.json", manifest(spec, study, options, grid).dump(2) + "\n");
  std::cerr << "wrote " << prefix << "_*\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-class proportional-hazards models: fit, select, predict, validate, simulate"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--seed", common.seed, "Master random seed (default: fresh entropy, echoed)");
  app.add_option("--threads", common.threads, "Worker threads")->capture_default_str();

  ModelFlags flags;
  std::string input, output, model_path, scenario_id = "I", scenario_file, labels_path;
  bool skip_se = false, cohort_like = false;

  auto* fit_cmd = app.add_subcommand("fit", "Fit a model and write a JSON result");
  fit_cmd->add_option("input", input, "CSV with columns time,status,covariates...")->required();
  fit_cmd->add_option("-o,--output", output, "Result JSON path (default: stdout)");
  fit_cmd->add_flag("--no-se", skip_se, "Skip standard errors");
  flags.add_to(*fit_cmd);

  std::vector<int> candidates{1, 2, 3, 4};
  auto* select_cmd = app.add_subcommand("select", "Compare information criteria over L");
  select_cmd->add_option("input", input, "CSV input")->required();
  select_cmd->add_option("--candidates", candidates, "Class counts to compare")
      ->delimiter(',')
      ->capture_default_str();
  select_cmd->add_option("-o,--output", output, "Criteria CSV path (default: stdout)");
  flags.add_to(*select_cmd, false);

  std::vector<double> times;
  auto* predict_cmd = app.add_subcommand("predict", "Predicted survival from a fitted model");
  predict_cmd->add_option("model", model_path, "Result JSON from 'fit'")->required();
  predict_cmd->add_option("input", input, "CSV with the model's covariate columns")->required();
  predict_cmd->add_option("-t,--times", times, "Prediction times")->delimiter(',')->required();
  predict_cmd->add_option("-o,--output", output, "Output CSV (default: stdout)");

  int folds = 5;
  double horizon = 0.0, step = 0.0;
  auto* cv_cmd = app.add_subcommand("cv-brier", "Cross-validated Brier scores against Cox");
  cv_cmd->add_option("input", input, "CSV input")->required();
  cv_cmd->add_option("--folds", folds, "Number of folds")->capture_default_str();
  cv_cmd->add_option("--horizon", horizon, "Last evaluation time (default: last event time)");
  cv_cmd->add_option("--step", step, "Regular grid step (default: distinct event times)");
  cv_cmd->add_option("-o,--output", output, "Long-format CSV (default: stdout)");
  flags.add_to(*cv_cmd);

  Index n = 1000;
  auto* sim_cmd = app.add_subcommand("simulate", "Draw a data set from a scenario");
  sim_cmd->add_option("--scenario", scenario_id, "Built-in scenario I-V")->capture_default_str();
  sim_cmd->add_option("--scenario-file", scenario_file, "Scenario JSON");
  sim_cmd->add_option("-n", n, "Sample size")->capture_default_str();
  sim_cmd->add_flag("--cohort-like", cohort_like, "14-covariate cohort with heavy censoring");
  sim_cmd->add_option("-o,--output", output, "CSV path (default: stdout)");
  sim_cmd->add_option("--labels", labels_path, "Write true classes to this CSV");

  std::string study, outdir = ".", init = "perturbed-truth";
  int replicates = 0, restarts = 5;
  auto* repro_cmd = app.add_subcommand("reproduce", "Replicate study for a built-in scenario");
  repro_cmd->add_option("scenario", scenario_id, "Scenario I-V")->required();
  repro_cmd->add_option("study", study, "estimation, selection or brier")
      ->required()
      ->check(CLI::IsMember({"estimation", "selection", "brier"}));
  repro_cmd->add_option("--replicates", replicates,
                        "Replicates (default 500 estimation, 100 selection, 50 brier)");
  repro_cmd->add_option("-n", n, "Sample size")->capture_default_str();
  repro_cmd->add_option("--outdir", outdir, "Output directory")->capture_default_str();
  repro_cmd->add_option("--init", init, "Initialization for estimation fits")
      ->check(CLI::IsMember({"perturbed-truth", "kmeans", "random"}))
      ->capture_default_str();
  repro_cmd->add_option("--restarts", restarts, "Fits per model under k-means or random init")
      ->capture_default_str();
  repro_cmd->add_flag("--no-se", skip_se, "Skip standard errors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*fit_cmd) return cmd_fit(common, flags, input, output, skip_se);
    if (*select_cmd) return cmd_select(common, flags, input, candidates, output);
    if (*predict_cmd) return cmd_predict(model_path, input, times, output);
    if (*cv_cmd) return cmd_cv_brier(common, flags, input, folds, horizon, step, output);
    if (*sim_cmd) return cmd_simulate(common, scenario_id, scenario_file, n, cohort_like, output, labels_path);
    if (*repro_cmd)
      return cmd_reproduce(common, scenario_id, study, replicates, n, outdir, init, restarts, skip_se);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
