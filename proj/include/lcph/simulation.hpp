#pragma once

// Simulation scenarios and replicate studies: estimation accuracy, class
// number selection and cross-validated Brier comparison against Cox.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lcph/inference.hpp"
#include "lcph/prediction.hpp"
#include "lcph/selection.hpp"

namespace lcph {

/// True cumulative baseline hazard used for data generation, 0.1 (e^t - 1).
inline double true_cumulative_hazard(double t) { return 0.1 * std::expm1(t); }

/// Two covariates: x1 ~ Bernoulli(0.5), x2 ~ Uniform(0, 1). Both enter the
/// membership and the class-specific hazard models.
struct ScenarioSpec {
  std::string id;
  int num_classes = 2;
  /// Rate of the exponential censoring component; C = min(Exp(r), U(5, 6)).
  double censoring_rate = 0.1;
  /// (L-1) x 3, columns intercept, x1, x2.
  Matrix alpha;
  /// (zeta_1, a_2, zeta_2, ..., a_L, zeta_L).
  Vector gamma;
  Index n = 1000;
  std::uint64_t seed = 1;
  /// Right end of the Brier evaluation range.
  double horizon = 5.0;

  /// One of the built-in scenarios "I" .. "V". Throws InputError otherwise.
  static ScenarioSpec table(const std::string& id, Index n = 1000, std::uint64_t seed = 1);
  static std::vector<std::string> table_ids();

  ModelConfig model_config() const;
  Vector true_theta() const;
  void validate() const;
};

struct SimulatedData {
  Dataset data;
  /// 0-based true class of each subject.
  std::vector<int> labels;
};

SimulatedData generate(const ScenarioSpec& spec, std::mt19937_64& rng);
SimulatedData generate(const ScenarioSpec& spec);

/// Event time with cumulative hazard exp(eta) * 0.1 (e^t - 1) at uniform u.
inline double event_time_from_uniform(double u, double eta) {
  return std::log1p(-std::log(u) / (0.1 * std::exp(eta)));
}

/// Stream seed for replicate `index` of a study run with `master`.
std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index);

/// A synthetic cohort with 14 covariates (7 binary, 7 standard normal) and
/// roughly 72% censoring, two latent classes.
SimulatedData generate_cohort_like(Index n, std::uint64_t seed);

enum class InitMode { perturbed_truth, kmeans, random };

const char* init_mode_name(InitMode mode);
InitMode parse_init_mode(const std::string& name);

struct StudyOptions {
  int replicates = 500;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  /// Perturbed truth starts from 0.9 on the true class, 0.1/(L-1) elsewhere.
  InitMode init = InitMode::perturbed_truth;
  /// Fits per replicate for k-means and random initialization.
  int restarts = 5;
  /// Skip the profile-likelihood covariance (SEE and CP are then NaN).
  bool standard_errors = true;
};

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double median_bias = 0.0;
  /// Empirical standard deviation of the estimates.
  double sd = 0.0;
  /// Median of the estimated standard errors.
  double median_see = 0.0;
  double coverage = 0.0;
  int used = 0;
};

struct ReplicateSummary {
  std::string scenario;
  Index n = 0;
  int replicates = 0;
  /// Replicates whose fit threw.
  int failures = 0;
  /// Replicates that converged and passed the median + 5 MAD screen.
  int converged = 0;
  double convergence_rate = 0.0;
  double median_entropy_index = 0.0;
  double median_censoring = 0.0;
  /// Largest per-iteration log-likelihood decrease over all fits.
  double max_loglik_drop = 0.0;
  std::vector<ParameterSummary> parameters;
  /// Lambda(3), point estimate only.
  ParameterSummary cumulative_hazard_3;
  /// Per-replicate estimates, in replicate order (empty rows for failures).
  std::vector<Vector> estimates;
  std::vector<std::string> failure_messages;
};

/// Fits R replicates of `spec`. Throws NumericalError if more than half fail.
ReplicateSummary run_replicates(const ScenarioSpec& spec, const StudyOptions& options);

struct SelectionStudy {
  std::vector<int> candidates;
  int replicates = 0;
  int failures = 0;
  /// counts[c][k]: replicates where criterion c picked candidates[k].
  /// Criteria in the order aic, bic, icl_bic, entropy_index.
  std::vector<std::vector<int>> counts;

  double frequency(Criterion c, int num_classes) const;
};

SelectionStudy run_selection_study(const ScenarioSpec& spec, std::span<const int> candidates,
                                   const StudyOptions& options);

struct BrierStudy {
  std::vector<double> grid;
  /// R x G fold-averaged curves, NaN where undefined or failed.
  Matrix model_bs1, model_bs2, comparator_bs1, comparator_bs2;
  int failures = 0;
  std::vector<std::string> failure_messages;

  /// Column medians over replicates, ignoring NaN.
  static Vector column_medians(const Matrix& m);
};

/// Regular grid step, 2 step, ... up to and including horizon.
std::vector<double> regular_grid(double horizon, double step = 0.25);

BrierStudy run_brier_study(const ScenarioSpec& spec, std::span<const double> grid,
                           const StudyOptions& options, int folds = 5);

}  // namespace lcph
