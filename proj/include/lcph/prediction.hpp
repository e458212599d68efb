#pragma once

// Predicted survival, Kaplan-Meier curves and censoring-weighted Brier
// scores, plus k-fold cross-validated Brier curves against a single-class
// comparator.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lcph/em.hpp"

namespace lcph {

/// Right-continuous nonincreasing step curve starting at 1.
struct SurvivalCurve {
  Vector times;
  Vector values;

  double operator()(double t) const;
  /// Value just before t.
  double left_limit(double t) const;
};

enum class KaplanMeierTarget { event, censoring };

/// Product-limit estimator. In censoring mode the censored observations are
/// the "events" (reverse Kaplan-Meier).
SurvivalCurve kaplan_meier(std::span<const double> times, std::span<const int> status,
                           KaplanMeierTarget target = KaplanMeierTarget::event);
SurvivalCurve kaplan_meier(const Dataset& data, KaplanMeierTarget target = KaplanMeierTarget::event);

/// Mixture survival S(t | x) = sum_l p_l(x) exp{-Lambda(t) e^{z_l'gamma}}
/// for a fitted model.
class SurvivalPredictor {
 public:
  SurvivalPredictor(Parameters params, ModelConfig config);

  /// `covariates` is the full covariate vector of one subject.
  double operator()(const Vector& covariates, double t) const;

  /// n x G matrix of S(t_g | x_i).
  Matrix survival(const Matrix& covariates, std::span<const double> times) const;
  /// S(t_i | x_i) for paired rows and times.
  Vector survival_paired(const Matrix& covariates, const Vector& times) const;
  /// n x L class-specific survival exp{-Lambda(t) e^{z_l'gamma}} at one time.
  Matrix class_survival(const Matrix& covariates, double t) const;

  const Parameters& params() const { return params_; }
  const ModelConfig& config() const { return config_; }

 private:
  Design design_for(const Matrix& covariates) const;

  Parameters params_;
  ModelConfig config_;
};

double predicted_survival(const Vector& covariates, double t, const Parameters& params,
                          const ModelConfig& config);

/// Brier-score curves. Missing values (censoring survival zero) are NaN.
struct BrierCurve {
  Vector times;
  Vector bs1;  // inverse-probability-of-censoring weighted
  Vector bs2;  // censored subjects redistributed through the model
  int folds = 1;
};

/// Single-split Brier scores. `surv_grid` is n x G with S(grid_g | x_i) and
/// `surv_own` holds S(T_i | x_i). Censoring survival is read as G(t) for
/// subjects still at risk and G(T_i-) for observed events.
BrierCurve brier_scores(const Dataset& test, const Matrix& surv_grid, const Vector& surv_own,
                        const SurvivalCurve& censoring, std::span<const double> grid);
BrierCurve brier_scores(const Dataset& test, const SurvivalPredictor& predictor,
                        const SurvivalCurve& censoring, std::span<const double> grid);

/// Distinct event times in (0, horizon].
std::vector<double> event_time_grid(const Dataset& data, double horizon);

/// Seeded fold labels, stratified by event status.
std::vector<int> stratified_folds(const Dataset& data, int folds, std::uint64_t seed);

struct CrossValidationOptions {
  int folds = 5;
  std::uint64_t seed = 1;
  /// Restarts per training fit of the latent-class model.
  int restarts = 1;
  unsigned threads = 1;
};

struct CrossValidatedBrier {
  BrierCurve model;
  BrierCurve comparator;
  /// Per-fold curves, model then comparator, for long-format output.
  std::vector<BrierCurve> model_folds;
  std::vector<BrierCurve> comparator_folds;
  std::vector<std::string> skipped;
  /// Where the censoring distribution was estimated.
  std::string censoring_source = "test fold";
};

/// Fits `model` and `comparator` on each training split and scores the held
/// out split with a Kaplan-Meier censoring estimate from that split. Needs at
/// least three successful folds per model.
CrossValidatedBrier cross_validated_brier(const Dataset& data, const ModelConfig& model,
                                          const ModelConfig& comparator,
                                          std::span<const double> grid,
                                          const CrossValidationOptions& options = {});

/// Kaplan-Meier curve beside the model-implied population survival (mean of
/// S(t | x_i)) and the mean class-specific survival curves, at each event time.
struct GoodnessOfFit {
  Vector times;
  Vector kaplan_meier;
  Vector overall;
  Matrix by_class;  // m x L
};

GoodnessOfFit goodness_of_fit(const Dataset& data, const Parameters& params,
                              const ModelConfig& config);

}  // namespace lcph
