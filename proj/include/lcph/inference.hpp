#pragma once

// Standard errors for (alpha, gamma) from first-order differences of the
// per-subject profile log-likelihood, with Lambda profiled out by the
// E-step/Breslow fixed point.

#include <cmath>
#include <vector>

#include "lcph/em.hpp"

namespace lcph {

struct CovarianceResult {
  Vector theta_hat;
  Matrix covariance;
  /// Finite-difference half-width, 5 / sqrt(n).
  double step = 0.0;
  /// n x r matrix of per-subject profile score differences.
  Matrix profile_scores;

  Vector standard_errors() const { return covariance.diagonal().cwiseSqrt(); }
};

struct ProfileOptions {
  double tolerance = 1e-7;
  int max_iterations = 10000;
};

/// Per-subject log-likelihood contributions at theta with Lambda profiled
/// out. alpha and gamma stay fixed; only the weights and Lambda are iterated,
/// starting from the converged fit in `warm_start`.
Vector profile_loglik_at(const Dataset& data, const Vector& theta, const ModelConfig& config,
                         const EmState& warm_start, const ProfileOptions& options = {});

inline double profile_step(Index n) { return 5.0 / std::sqrt(static_cast<double>(n)); }

/// Inverse of the summed outer products of per-subject central-difference
/// profile scores. Throws NumericalError if that matrix is not positive
/// definite. `threads` parallelises the 2r perturbations.
CovarianceResult covariance(const Dataset& data, const EmState& fit, const ModelConfig& config,
                            unsigned threads = 1, const ProfileOptions& options = {});

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Standard normal quantile.
double normal_quantile(double p);

std::vector<Interval> wald_intervals(const CovarianceResult& cov, double level);
std::vector<Interval> wald_intervals(const Vector& estimate, const Vector& standard_errors,
                                     double level);

double median(std::vector<double> values);
/// Raw median absolute deviation (no consistency factor).
double median_absolute_deviation(const std::vector<double>& values);

/// Flags estimates whose distance to the truth exceeds median + 5 MAD of all
/// such distances.
std::vector<bool> nonconvergence_flags(const std::vector<Vector>& estimates, const Vector& truth);

}  // namespace lcph
