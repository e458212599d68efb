#include "lcph/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lcph/parallel.hpp"

namespace lcph {

Vector profile_loglik_at(const Dataset& data, const Vector& theta, const ModelConfig& config,
                         const EmState& warm_start, const ProfileOptions& options) {
  const Design design = make_design(data, config);
  const RiskSetIndex risk = RiskSetIndex::build(data);

  Parameters params = warm_start.params;
  check_dimensions(params, config);
  unpack_theta(theta, params);
  PosteriorWeights weights = warm_start.weights;
  if (weights.rows() != data.size() || weights.cols() != config.num_classes)
    throw InputError("profile_loglik_at: warm start does not match the data");

  std::vector<double> history;
  for (int it = 1; it <= options.max_iterations; ++it) {
    params.baseline = breslow_update(data, risk, design.survival, weights, params.gamma);
    EStepResult post = e_step_full(data, design, params);
    weights = std::move(post.weights);
    history.push_back(post.loglik);
    if (aitken_stop(history, options.tolerance)) return post.subject_logliks;
  }
  throw NumericalError("profile likelihood: inner loop did not converge", options.max_iterations);
}

CovarianceResult covariance(const Dataset& data, const EmState& fit, const ModelConfig& config,
                            unsigned threads, const ProfileOptions& options) {
  CovarianceResult result;
  result.theta_hat = pack_theta(fit.params);
  const Index r = result.theta_hat.size();
  const Index n = data.size();
  result.step = profile_step(n);
  result.profile_scores = Matrix::Zero(n, r);
  result.covariance = Matrix::Zero(r, r);
  if (r == 0) return result;

  std::vector<Vector> plus(static_cast<std::size_t>(r)), minus(static_cast<std::size_t>(r));
  parallel_for(static_cast<std::size_t>(2 * r), threads, [&](std::size_t job) {
    const Index k = static_cast<Index>(job / 2);
    Vector theta = result.theta_hat;
    const bool up = job % 2 == 0;
    theta[k] += up ? result.step : -result.step;
    (up ? plus : minus)[static_cast<std::size_t>(k)] =
        profile_loglik_at(data, theta, config, fit, options);
  });
  for (Index k = 0; k < r; ++k)
    result.profile_scores.col(k) =
        (plus[static_cast<std::size_t>(k)] - minus[static_cast<std::size_t>(k)]) / (2.0 * result.step);

  const Matrix information = result.profile_scores.transpose() * result.profile_scores;
  Eigen::LLT<Matrix> llt(information);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-13)
    throw NumericalError(
        "covariance: outer product of profile scores is singular; "
        "use a larger sample or fewer classes");
  result.covariance = llt.solve(Matrix::Identity(r, r));
  result.covariance = 0.5 * (result.covariance + result.covariance.transpose()).eval();
  return result;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw InputError("normal_quantile: p must lie in [0, 1]");
  }
  // Acklam's rational approximation, then Halley refinement against erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  for (int k = 0; k < 2; ++k) {
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

std::vector<Interval> wald_intervals(const Vector& estimate, const Vector& standard_errors,
                                     double level) {
  if (!(level > 0.0 && level < 1.0)) throw InputError("wald_intervals: level must lie in (0, 1)");
  if (estimate.size() != standard_errors.size())
    throw InputError("wald_intervals: estimate and standard errors differ in length");
  const double z = normal_quantile(0.5 * (1.0 + level));
  std::vector<Interval> out(static_cast<std::size_t>(estimate.size()));
  for (Index k = 0; k < estimate.size(); ++k)
    out[static_cast<std::size_t>(k)] = {estimate[k] - z * standard_errors[k],
                                        estimate[k] + z * standard_errors[k]};
  return out;
}

std::vector<Interval> wald_intervals(const CovarianceResult& cov, double level) {
  return wald_intervals(cov.theta_hat, cov.standard_errors(), level);
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double median_absolute_deviation(const std::vector<double>& values) {
  const double center = median(values);
  std::vector<double> dev(values.size());
  std::transform(values.begin(), values.end(), dev.begin(),
                 [center](double v) { return std::abs(v - center); });
  return median(std::move(dev));
}

std::vector<bool> nonconvergence_flags(const std::vector<Vector>& estimates, const Vector& truth) {
  if (estimates.size() < 2) throw InputError("nonconvergence_flags: need at least two estimates");
  std::vector<double> norms;
  norms.reserve(estimates.size());
  for (const Vector& est : estimates) {
    if (est.size() != truth.size())
      throw InputError("nonconvergence_flags: estimate and truth differ in length");
    norms.push_back((est - truth).norm());
  }
  const double cutoff = median(norms) + 5.0 * median_absolute_deviation(norms);
  std::vector<bool> flags(norms.size());
  for (std::size_t k = 0; k < norms.size(); ++k) flags[k] = norms[k] > cutoff;
  return flags;
}

}  // namespace lcph
