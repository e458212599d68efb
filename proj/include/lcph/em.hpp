#pragma once

// EM fitting of the latent-class proportional-hazards model. Each iteration
// runs a profiled M-step (weighted multinomial logit for alpha, weighted
// partial-likelihood Newton for gamma, weighted Breslow jumps for Lambda)
// followed by an E-step; iteration stops on the Aitken-extrapolated
// log-likelihood.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lcph/model.hpp"

namespace lcph {

/// Risk-set bookkeeping over the distinct event times.
struct RiskSetIndex {
  /// Subjects sorted by decreasing follow-up time.
  std::vector<Index> order;
  /// |{i : T_i >= t_j}| for each event time; the risk set at t_j is the first
  /// risk_size[j] entries of `order`.
  std::vector<Index> risk_size;
  /// Subjects with an event at t_j.
  std::vector<std::vector<Index>> events;

  static RiskSetIndex build(const Dataset& data);
};

struct NewtonOptions {
  double gradient_tolerance = 1e-8;
  int max_iterations = 100;
  int max_halvings = 30;
};

struct GammaUpdate {
  Vector gamma;
  /// Coordinates with no information under the current weights; held at
  /// their starting value.
  std::vector<Index> frozen;
  int iterations = 0;
  double score_norm = 0.0;
};

struct EmState {
  Parameters params;
  PosteriorWeights weights;
  std::vector<double> loglik_history;
  int iteration = 0;
  bool converged = false;
  /// Largest single-iteration decrease of the log-likelihood (0 if monotone).
  double max_loglik_drop = 0.0;
  std::vector<Index> frozen_gamma;
  /// Number of fits tried when restarting; 1 for a single fit.
  int restarts = 1;

  double loglik() const { return loglik_history.empty() ? 0.0 : loglik_history.back(); }
};

/// Posterior membership probabilities given the current parameters.
PosteriorWeights e_step(const Dataset& data, const Design& design, const Parameters& params);
PosteriorWeights e_step(const Dataset& data, const Parameters& params, const ModelConfig& config);

struct EStepResult {
  PosteriorWeights weights;
  /// log sum_l p_l f_l per subject; sums to the observed-data log-likelihood.
  Vector subject_logliks;
  double loglik = 0.0;
};

/// E-step together with the per-subject observed-data log-likelihood.
EStepResult e_step_full(const Dataset& data, const Design& design, const Parameters& params);

/// Weighted Breslow estimate of Lambda for fixed gamma.
Baseline breslow_update(const Dataset& data, const RiskSetIndex& risk, const Matrix& survival_design,
                        const PosteriorWeights& weights, const Vector& gamma);
Baseline breslow_update(const Dataset& data, const PosteriorWeights& weights, const Vector& gamma,
                        const ModelConfig& config);

/// sum_i sum_l w_il log p_l(x_i; alpha).
double weighted_multinomial_loglik(const Matrix& membership_design, const PosteriorWeights& weights,
                                   const Matrix& alpha);

/// Newton-Raphson for the weighted multinomial logit. Throws SeparationError
/// when the coefficients diverge and NumericalError when the Hessian is
/// singular or step-halving is exhausted.
Matrix m_step_alpha(const Matrix& membership_design, const PosteriorWeights& weights,
                    const Matrix& alpha_init, const NewtonOptions& options = {});

/// Profiled objective in gamma: the weighted log partial likelihood
/// sum over events of [sum_l w_il z_il'gamma - log S0(T_i)].
double weighted_partial_loglik(const Dataset& data, const RiskSetIndex& risk,
                               const Matrix& survival_design, const PosteriorWeights& weights,
                               const Vector& gamma);

/// Newton-Raphson zero of the weighted partial score, with subjects
/// replicated over classes (no tie correction across the replicas).
GammaUpdate m_step_gamma(const Dataset& data, const RiskSetIndex& risk,
                         const Matrix& survival_design, const PosteriorWeights& weights,
                         const Vector& gamma_init, const NewtonOptions& options = {});

/// Aitken-acceleration stopping rule on a log-likelihood history.
bool aitken_stop(std::span<const double> history, double tol);

/// Lloyd's algorithm in one dimension with k-means++ seeding. Returns labels
/// ordered so that cluster 0 has the smallest centroid.
std::vector<int> kmeans_1d(std::span<const double> values, int k, std::mt19937_64& rng,
                           int restarts = 10);

/// 0.9 on the labelled class and 0.1/(L-1) elsewhere (1 when L = 1).
PosteriorWeights label_weights(std::span<const int> labels, int num_classes, double own = 0.9);

PosteriorWeights initialize_weights(const Dataset& data, const ModelConfig& config);

bool is_row_stochastic(const PosteriorWeights& weights, double tol = 1e-10);

/// Full EM fit starting from the configured initialization.
EmState fit(const Dataset& data, const ModelConfig& config);

/// EM fit from explicit starting weights.
EmState fit_from_weights(const Dataset& data, const ModelConfig& config,
                         const PosteriorWeights& initial_weights);

/// Runs `restarts` fits and keeps the one with the largest final
/// log-likelihood. The first uses the configured initialization, the others
/// random starts seeded from config.seed + k. Failed attempts are skipped;
/// throws the last error if every attempt fails.
EmState fit_with_restarts(const Dataset& data, const ModelConfig& config, int restarts);

/// Process-wide tally over every EM run, including failed and discarded
/// restarts. Thread-safe.
struct FitMonitor {
  std::uint64_t fits = 0;
  std::uint64_t iterations = 0;
  double max_loglik_drop = 0.0;
};
FitMonitor fit_monitor();
void reset_fit_monitor();

}  // namespace lcph
