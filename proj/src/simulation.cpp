#include "lcph/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "lcph/parallel.hpp"

namespace lcph {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix alpha_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix a(static_cast<Index>(rows.size()), 3);
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) a(r, c++) = v;
    ++r;
  }
  return a;
}

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index k = 0;
  for (double x : values) v[k++] = x;
  return v;
}

double sample_sd(const std::vector<double>& x) {
  if (x.size() < 2) return kNaN;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double median_or_nan(std::vector<double> x) { return x.empty() ? kNaN : median(std::move(x)); }

// Draws x, classes, event and censoring times for a model with the given
// membership and survival designs already filled in `x`.
SimulatedData draw_outcomes(const Matrix& x, const Matrix& alpha, const Vector& gamma,
                            const ModelConfig& config, double censoring_rate,
                            std::mt19937_64& rng, std::vector<std::string> names) {
  const Index n = x.rows();
  const Design design = make_design(x, config);
  const Matrix prob = log_membership_probs(design.membership, alpha).array().exp().matrix();
  const Matrix eta = linear_predictors(design.survival, gamma, config.num_classes);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_real_distribution<double> admin(5.0, 6.0);
  std::exponential_distribution<double> expo(censoring_rate);

  Vector times(n);
  IntVector status(n);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Vector row = prob.row(i).transpose();
    std::discrete_distribution<int> pick(row.data(), row.data() + row.size());
    const int cls = pick(rng);
    labels[static_cast<std::size_t>(i)] = cls;

    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    const double t = event_time_from_uniform(u, eta(i, cls));
    const double c = std::min(expo(rng), admin(rng));
    times[i] = std::min(t, c);
    status[i] = t <= c ? 1 : 0;
  }
  return {Dataset(std::move(times), std::move(status), x, std::move(names)), std::move(labels)};
}

}  // namespace

std::vector<std::string> ScenarioSpec::table_ids() { return {"I", "II", "III", "IV", "V"}; }

ScenarioSpec ScenarioSpec::table(const std::string& id, Index n, std::uint64_t seed) {
  ScenarioSpec s;
  s.id = id;
  s.n = n;
  s.seed = seed;
  const double log2 = std::numbers::ln2;
  if (id == "I" || id == "II" || id == "III") {
    s.num_classes = 2;
    s.censoring_rate = id == "III" ? 0.6 : 0.1;
    s.alpha = alpha_rows({{log2, 0.0, 0.0}});
    s.gamma = vec({-2.0, 0.0, id == "II" ? 0.0 : 2.0, 2.0, 2.0});
  } else if (id == "IV") {
    s.num_classes = 2;
    s.censoring_rate = 0.1;
    s.alpha = alpha_rows({{2.0, -4.0, 0.0}});
    s.gamma = vec({0.0, -3.0, 0.5, 0.0, 6.0});
  } else if (id == "V") {
    s.num_classes = 3;
    s.censoring_rate = 0.1;
    s.alpha = alpha_rows({{0.0, -0.5, 0.0}, {0.0, 0.0, 0.5}});
    s.gamma = vec({-2.0, -2.0, 2.0, 2.0, 2.0, 4.0, 4.0, 4.0});
    s.horizon = 5.75;
  } else {
    throw InputError("unknown scenario '" + id + "' (expected I, II, III, IV or V)");
  }
  return s;
}

ModelConfig ScenarioSpec::model_config() const {
  ModelConfig config;
  config.num_classes = num_classes;
  config.membership_covariates = {0, 1};
  config.survival_covariates = {0, 1};
  config.seed = seed;
  return config;
}

void ScenarioSpec::validate() const {
  if (num_classes < 1) throw InputError("scenario: num_classes must be >= 1");
  if (!(censoring_rate > 0.0)) throw InputError("scenario: censoring rate must be positive");
  if (n < 1) throw InputError("scenario: n must be >= 1");
  const ModelConfig config = model_config();
  if (alpha.rows() != num_classes - 1 || alpha.cols() != config.membership_dim())
    throw InputError("scenario: alpha must be (L-1) x 3");
  if (gamma.size() != config.gamma_dim())
    throw InputError("scenario: gamma has the wrong length for L classes and two covariates");
  if (!(horizon > 0.0)) throw InputError("scenario: horizon must be positive");
}

Vector ScenarioSpec::true_theta() const {
  Parameters p;
  p.alpha = alpha;
  p.gamma = gamma;
  return pack_theta(p);
}

SimulatedData generate(const ScenarioSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix x(spec.n, 2);
  for (Index i = 0; i < spec.n; ++i) {
    x(i, 0) = coin(rng) ? 1.0 : 0.0;
    x(i, 1) = unif(rng);
  }
  return draw_outcomes(x, spec.alpha, spec.gamma, spec.model_config(), spec.censoring_rate, rng,
                       {"x1", "x2"});
}

SimulatedData generate(const ScenarioSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  return generate(spec, rng);
}

std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

SimulatedData generate_cohort_like(Index n, std::uint64_t seed) {
  constexpr Index p = 14;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix x(n, p);
  std::vector<std::string> names;
  for (Index k = 0; k < p; ++k) names.push_back((k < 7 ? "b" : "z") + std::to_string(k % 7 + 1));
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < p; ++k) x(i, k) = k < 7 ? (coin(rng) ? 1.0 : 0.0) : gauss(rng);

  ModelConfig config;
  config.num_classes = 2;
  for (Index k = 0; k < p; ++k) {
    config.membership_covariates.push_back(k);
    config.survival_covariates.push_back(k);
  }
  Matrix alpha = Matrix::Zero(1, p + 1);
  alpha(0, 0) = -0.5;
  alpha(0, 1) = 1.0;
  alpha(0, 8) = -0.8;
  Vector gamma = Vector::Zero(config.gamma_dim());
  gamma[1] = 0.3;
  gamma[8] = 0.2;
  gamma[p] = 1.5;
  gamma[p + 2] = 0.3;
  gamma[p + 10] = 0.5;
  return draw_outcomes(x, alpha, gamma, config, 1.4, rng, std::move(names));
}

const char* init_mode_name(InitMode mode) {
  switch (mode) {
    case InitMode::perturbed_truth: return "perturbed-truth";
    case InitMode::kmeans: return "kmeans";
    case InitMode::random: return "random";
  }
  return "?";
}

InitMode parse_init_mode(const std::string& name) {
  if (name == "perturbed-truth") return InitMode::perturbed_truth;
  if (name == "kmeans") return InitMode::kmeans;
  if (name == "random") return InitMode::random;
  throw InputError("unknown init mode '" + name + "'");
}

namespace {

struct ReplicateOutcome {
  std::optional<Vector> estimate;
  Vector see;
  double cumhaz3 = kNaN;
  double entropy_index = kNaN;
  double censoring = kNaN;
  double loglik_drop = 0.0;
  bool em_converged = false;
  std::string error;
};

EmState fit_replicate(const SimulatedData& sim, ModelConfig config, InitMode init, int restarts) {
  switch (init) {
    case InitMode::perturbed_truth:
      return fit_from_weights(sim.data, config, label_weights(sim.labels, config.num_classes));
    case InitMode::kmeans:
      config.initialization = Initialization::kmeans;
      return fit_with_restarts(sim.data, config, restarts);
    case InitMode::random:
      config.initialization = Initialization::random;
      return fit_with_restarts(sim.data, config, restarts);
  }
  throw InputError("unknown init mode");
}

}  // namespace

ReplicateSummary run_replicates(const ScenarioSpec& spec, const StudyOptions& options) {
  if (options.replicates < 2) throw InputError("run_replicates: need at least two replicates");
  spec.validate();
  const auto R = static_cast<std::size_t>(options.replicates);
  std::vector<ReplicateOutcome> outcomes(R);

  parallel_for(R, options.threads, [&](std::size_t r) {
    ReplicateOutcome& out = outcomes[r];
    ScenarioSpec rep = spec;
    rep.seed = replicate_seed(options.seed, r);
    std::mt19937_64 rng(rep.seed);
    try {
      const SimulatedData sim = generate(rep, rng);
      out.censoring = 1.0 - static_cast<double>(sim.data.num_events()) / static_cast<double>(sim.data.size());
      const ModelConfig config = rep.model_config();
      const EmState state = fit_replicate(sim, config, options.init, options.restarts);
      out.estimate = pack_theta(state.params);
      out.em_converged = state.converged;
      out.loglik_drop = state.max_loglik_drop;
      out.entropy_index = entropy_index(state.weights);
      out.cumhaz3 = state.params.baseline(3.0);
      out.see = Vector::Constant(out.estimate->size(), kNaN);
      if (options.standard_errors) {
        try {
          out.see = covariance(sim.data, state, config).standard_errors();
        } catch (const NumericalError& e) {
          out.error = std::string("covariance: ") + e.what();
        }
      }
    } catch (const std::exception& e) {
      out.estimate.reset();
      out.error = e.what();
    }
  });

  ReplicateSummary summary;
  summary.scenario = spec.id;
  summary.n = spec.n;
  summary.replicates = options.replicates;

  std::vector<std::size_t> fitted;
  std::vector<Vector> fitted_estimates;
  std::vector<double> censoring;
  for (std::size_t r = 0; r < R; ++r) {
    const ReplicateOutcome& out = outcomes[r];
    if (std::isfinite(out.censoring)) censoring.push_back(out.censoring);
    summary.max_loglik_drop = std::max(summary.max_loglik_drop, out.loglik_drop);
    summary.estimates.push_back(out.estimate.value_or(Vector()));
    if (out.estimate) {
      fitted.push_back(r);
      fitted_estimates.push_back(*out.estimate);
    } else {
      ++summary.failures;
    }
    if (!out.error.empty())
      summary.failure_messages.push_back("replicate " + std::to_string(r) + ": " + out.error);
  }
  if (2 * summary.failures > summary.replicates) {
    std::string msg = "run_replicates: " + std::to_string(summary.failures) + " of " +
                      std::to_string(summary.replicates) + " replicates failed";
    if (!summary.failure_messages.empty()) msg += "; first: " + summary.failure_messages.front();
    throw NumericalError(msg);
  }

  const Vector truth = spec.true_theta();
  const std::vector<bool> flagged = fitted_estimates.size() >= 2
                                        ? nonconvergence_flags(fitted_estimates, truth)
                                        : std::vector<bool>(fitted_estimates.size(), false);
  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < fitted.size(); ++k)
    if (!flagged[k] && outcomes[fitted[k]].em_converged) kept.push_back(fitted[k]);
  summary.converged = static_cast<int>(kept.size());
  summary.convergence_rate = static_cast<double>(kept.size()) / static_cast<double>(R);
  summary.median_censoring = median_or_nan(censoring);

  std::vector<double> entropies;
  for (std::size_t r : kept) entropies.push_back(outcomes[r].entropy_index);
  summary.median_entropy_index = median_or_nan(entropies);

  const std::vector<std::string> names = theta_names(spec.model_config(), {"x1", "x2"});
  const double z = normal_quantile(0.975);
  for (Index k = 0; k < truth.size(); ++k) {
    ParameterSummary ps;
    ps.name = names[static_cast<std::size_t>(k)];
    ps.truth = truth[k];
    std::vector<double> bias, est, see;
    int covered = 0, with_se = 0;
    for (std::size_t r : kept) {
      const double e = (*outcomes[r].estimate)[k];
      const double s = outcomes[r].see[k];
      bias.push_back(e - truth[k]);
      est.push_back(e);
      if (std::isfinite(s)) {
        see.push_back(s);
        ++with_se;
        if (std::abs(e - truth[k]) <= z * s) ++covered;
      }
    }
    ps.median_bias = median_or_nan(bias);
    ps.sd = sample_sd(est);
    ps.median_see = median_or_nan(see);
    ps.coverage = with_se > 0 ? static_cast<double>(covered) / with_se : kNaN;
    ps.used = static_cast<int>(kept.size());
    summary.parameters.push_back(ps);
  }

  ParameterSummary& ch = summary.cumulative_hazard_3;
  ch.name = "Lambda(3)";
  ch.truth = true_cumulative_hazard(3.0);
  std::vector<double> bias, est;
  for (std::size_t r : kept) {
    bias.push_back(outcomes[r].cumhaz3 - ch.truth);
    est.push_back(outcomes[r].cumhaz3);
  }
  ch.median_bias = median_or_nan(bias);
  ch.sd = sample_sd(est);
  ch.median_see = kNaN;
  ch.coverage = kNaN;
  ch.used = static_cast<int>(kept.size());
  return summary;
}

double SelectionStudy::frequency(Criterion c, int num_classes) const {
  const int done = replicates - failures;
  if (done <= 0) return kNaN;
  for (std::size_t k = 0; k < candidates.size(); ++k)
    if (candidates[k] == num_classes)
      return static_cast<double>(counts[static_cast<std::size_t>(c)][k]) / done;
  return 0.0;
}

SelectionStudy run_selection_study(const ScenarioSpec& spec, std::span<const int> candidates,
                                   const StudyOptions& options) {
  if (options.replicates < 1) throw InputError("run_selection_study: need at least one replicate");
  if (candidates.empty()) throw InputError("run_selection_study: no candidate class counts");
  spec.validate();
  constexpr Criterion kAll[] = {Criterion::aic, Criterion::bic, Criterion::icl_bic,
                                Criterion::entropy_index};

  SelectionStudy study;
  study.candidates.assign(candidates.begin(), candidates.end());
  std::sort(study.candidates.begin(), study.candidates.end());
  study.candidates.erase(std::unique(study.candidates.begin(), study.candidates.end()),
                         study.candidates.end());
  study.replicates = options.replicates;
  study.counts.assign(std::size(kAll), std::vector<int>(study.candidates.size(), 0));

  const auto R = static_cast<std::size_t>(options.replicates);
  std::vector<std::vector<int>> picks(R);
  parallel_for(R, options.threads, [&](std::size_t r) {
    ScenarioSpec rep = spec;
    rep.seed = replicate_seed(options.seed, r);
    std::mt19937_64 rng(rep.seed);
    try {
      const SimulatedData sim = generate(rep, rng);
      const SelectionResult result = select_num_classes(
          sim.data, rep.model_config(), study.candidates, {options.restarts, 1});
      if (result.table.empty()) return;
      for (Criterion c : kAll) picks[r].push_back(result.best(c));
    } catch (const std::exception&) {
      picks[r].clear();
    }
  });

  for (const std::vector<int>& pick : picks) {
    if (pick.empty()) {
      ++study.failures;
      continue;
    }
    for (std::size_t c = 0; c < pick.size(); ++c) {
      const auto it = std::find(study.candidates.begin(), study.candidates.end(), pick[c]);
      ++study.counts[c][static_cast<std::size_t>(it - study.candidates.begin())];
    }
  }
  if (2 * study.failures > study.replicates)
    throw NumericalError("run_selection_study: more than half of the replicates failed");
  return study;
}

std::vector<double> regular_grid(double horizon, double step) {
  if (!(step > 0.0) || !(horizon >= step)) throw InputError("regular_grid: need 0 < step <= horizon");
  std::vector<double> grid;
  for (int k = 1;; ++k) {
    const double t = k * step;
    if (t > horizon + 1e-12) break;
    grid.push_back(t);
  }
  return grid;
}

Vector BrierStudy::column_medians(const Matrix& m) {
  Vector out(m.cols());
  for (Index g = 0; g < m.cols(); ++g) {
    std::vector<double> v;
    for (Index r = 0; r < m.rows(); ++r)
      if (std::isfinite(m(r, g))) v.push_back(m(r, g));
    out[g] = median_or_nan(std::move(v));
  }
  return out;
}

BrierStudy run_brier_study(const ScenarioSpec& spec, std::span<const double> grid,
                           const StudyOptions& options, int folds) {
  if (options.replicates < 1) throw InputError("run_brier_study: need at least one replicate");
  spec.validate();
  const Index R = options.replicates;
  const Index G = static_cast<Index>(grid.size());

  BrierStudy study;
  study.grid.assign(grid.begin(), grid.end());
  study.model_bs1 = study.model_bs2 = study.comparator_bs1 = study.comparator_bs2 =
      Matrix::Constant(R, G, kNaN);
  std::vector<std::string> errors(static_cast<std::size_t>(R));

  parallel_for(static_cast<std::size_t>(R), options.threads, [&](std::size_t r) {
    ScenarioSpec rep = spec;
    rep.seed = replicate_seed(options.seed, r);
    std::mt19937_64 rng(rep.seed);
    try {
      const SimulatedData sim = generate(rep, rng);
      const ModelConfig model = rep.model_config();
      ModelConfig cox = model;
      cox.num_classes = 1;
      cox.membership_covariates.clear();
      CrossValidationOptions cv;
      cv.folds = folds;
      cv.seed = rep.seed;
      cv.restarts = options.restarts;
      const CrossValidatedBrier result = cross_validated_brier(sim.data, model, cox, grid, cv);
      const auto row = static_cast<Index>(r);
      study.model_bs1.row(row) = result.model.bs1.transpose();
      study.model_bs2.row(row) = result.model.bs2.transpose();
      study.comparator_bs1.row(row) = result.comparator.bs1.transpose();
      study.comparator_bs2.row(row) = result.comparator.bs2.transpose();
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });

  for (std::size_t r = 0; r < errors.size(); ++r)
    if (!errors[r].empty()) {
      ++study.failures;
      study.failure_messages.push_back("replicate " + std::to_string(r) + ": " + errors[r]);
    }
  if (2 * study.failures > options.replicates)
    throw NumericalError("run_brier_study: more than half of the replicates failed");
  return study;
}

}  // namespace lcph
