#pragma once

// Data model and per-observation likelihood pieces of the latent-class
// proportional-hazards mixture:
//
//   p_l(x; alpha)  multinomial-logit class probabilities, alpha_1 = 0
//   f_l(T, D | x)  {dLambda(T) e^{z_l'gamma}}^D exp{-Lambda(T) e^{z_l'gamma}}
//
// with Lambda a step function jumping at the distinct uncensored times.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcph/errors.hpp"

namespace lcph {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;

/// Posterior class-membership weights, one row per subject, one column per
/// class. Rows are probability vectors.
using PosteriorWeights = Matrix;

struct Observation {
  double time = 0.0;  // follow-up time, min(T, C)
  int status = 0;     // 1 = event observed, 0 = censored
  Vector covariates;
};

/// Right-censored sample with its distinct event times indexed up front.
class Dataset {
 public:
  explicit Dataset(const std::vector<Observation>& observations,
                   std::vector<std::string> covariate_names = {});
  Dataset(Vector times, IntVector status, Matrix covariates,
          std::vector<std::string> covariate_names = {});

  Index size() const { return times_.size(); }
  Index num_covariates() const { return covariates_.cols(); }

  const Vector& times() const { return times_; }
  const IntVector& status() const { return status_; }
  const Matrix& covariates() const { return covariates_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  Observation operator[](Index i) const;

  /// Distinct uncensored times t_1 < ... < t_m.
  const Vector& event_times() const { return event_times_; }
  /// Number of tied events at each t_j.
  const IntVector& event_counts() const { return event_counts_; }
  Index num_event_times() const { return event_times_.size(); }
  Index num_events() const { return num_events_; }

  /// j with t_j == T_i for an uncensored subject, -1 when censored.
  Index jump_index(Index i) const { return jump_index_[i]; }
  /// Number of event times <= T_i.
  Index events_up_to(Index i) const { return events_up_to_[i]; }

  Dataset subset(std::span<const Index> rows) const;

 private:
  void validate_and_index();

  Vector times_;
  IntVector status_;
  Matrix covariates_;
  std::vector<std::string> names_;

  Vector event_times_;
  IntVector event_counts_;
  std::vector<Index> jump_index_;
  std::vector<Index> events_up_to_;
  Index num_events_ = 0;
};

enum class Initialization { random, kmeans, supplied_weights };

struct ModelConfig {
  int num_classes = 2;
  /// Column indices (0-based) of the covariates entering the class
  /// membership regression and the class-specific hazards.
  std::vector<Index> membership_covariates;
  std::vector<Index> survival_covariates;
  double tolerance = 1e-7;
  int max_iterations = 5000;
  Initialization initialization = Initialization::kmeans;
  std::uint64_t seed = 0;
  /// Used only with Initialization::supplied_weights.
  Matrix supplied_weights;

  /// Every covariate in both submodels.
  static ModelConfig with_all_covariates(const Dataset& data, int num_classes);

  Index membership_dim() const {
    return static_cast<Index>(membership_covariates.size()) + 1;
  }
  Index survival_dim() const {
    return static_cast<Index>(survival_covariates.size());
  }
  Index alpha_size() const { return (num_classes - 1) * membership_dim(); }
  Index gamma_dim() const {
    return survival_dim() * num_classes + num_classes - 1;
  }
  /// Finite-dimensional parameter count (baseline jumps excluded).
  Index num_params() const { return alpha_size() + gamma_dim(); }

  void validate(const Dataset& data) const;
};

/// Right-continuous nondecreasing step function, zero before the first jump.
template <typename Scalar>
class StepFunction {
 public:
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  StepFunction() = default;

  StepFunction(VectorType jump_times, VectorType jump_sizes)
      : times_(std::move(jump_times)), sizes_(std::move(jump_sizes)) {
    if (times_.size() != sizes_.size())
      throw InputError("step function: jump times and sizes differ in length");
    for (Index j = 0; j < times_.size(); ++j) {
      if (!std::isfinite(times_[j]) || times_[j] < Scalar(0))
        throw InputError("step function: jump times must be finite and >= 0");
      if (j > 0 && !(times_[j] > times_[j - 1]))
        throw InputError("step function: jump times must be strictly increasing");
      if (!std::isfinite(sizes_[j]) || !(sizes_[j] > Scalar(0)))
        throw InputError("step function: jump sizes must be finite and > 0");
    }
    cumulative_.resize(sizes_.size());
    Scalar acc(0);
    for (Index j = 0; j < sizes_.size(); ++j) cumulative_[j] = (acc += sizes_[j]);
  }

  Index size() const { return times_.size(); }
  const VectorType& jump_times() const { return times_; }
  const VectorType& jump_sizes() const { return sizes_; }
  /// Lambda(t_j) for each jump time.
  const VectorType& cumulative() const { return cumulative_; }

  /// Sum of jumps at times <= t.
  Scalar operator()(Scalar t) const { return value_through(count_up_to(t)); }

  /// Sum of jumps at times < t.
  Scalar left_limit(Scalar t) const {
    const auto it = std::lower_bound(times_.data(), times_.data() + times_.size(), t);
    return value_through(static_cast<Index>(it - times_.data()));
  }

  /// Number of jump times <= t.
  Index count_up_to(Scalar t) const {
    const auto it = std::upper_bound(times_.data(), times_.data() + times_.size(), t);
    return static_cast<Index>(it - times_.data());
  }

  /// Value after the first k jumps.
  Scalar value_through(Index k) const { return k == 0 ? Scalar(0) : cumulative_[k - 1]; }

  std::optional<Index> find_jump(Scalar t) const {
    const Index k = count_up_to(t);
    if (k > 0 && times_[k - 1] == t) return k - 1;
    return std::nullopt;
  }

 private:
  VectorType times_;
  VectorType sizes_;
  VectorType cumulative_;
};

/// (alpha, gamma, Lambda). alpha holds rows alpha_2..alpha_L, each
/// (intercept, membership covariates). gamma is laid out as
/// (zeta_1, a_2, zeta_2, ..., a_L, zeta_L).
template <typename Scalar>
struct BasicParameters {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> alpha;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gamma;
  StepFunction<Scalar> baseline;

  Index num_classes() const { return alpha.rows() + 1; }
};

using Parameters = BasicParameters<double>;
using Baseline = StepFunction<double>;

/// z_l for class `cls` (0-based): (x_bar, 0, ...) for the reference class and
/// (x_bar, 0, ..., 1, x_bar, ..., 0) with the (1, x_bar) block in slot cls.
template <typename Derived>
Vector expand_design(const Eigen::MatrixBase<Derived>& x_bar, Index cls, Index num_classes) {
  if (num_classes < 1 || cls < 0 || cls >= num_classes)
    throw InputError("expand_design: class index out of range");
  const Index q = x_bar.size();
  Vector z = Vector::Zero(q * num_classes + num_classes - 1);
  z.head(q) = x_bar;
  if (cls > 0) {
    const Index offset = q + (cls - 1) * (q + 1);
    z[offset] = 1.0;
    z.segment(offset + 1, q) = x_bar;
  }
  return z;
}

/// p_l(x; alpha) for l = 1..L. `x` holds the membership covariates only.
template <typename Derived>
Vector class_membership_probs(const Eigen::MatrixBase<Derived>& x, const Matrix& alpha) {
  const Index num_classes = alpha.rows() + 1;
  if (num_classes > 1 && alpha.cols() != x.size() + 1)
    throw InputError("class_membership_probs: alpha has wrong number of columns");
  Vector logits = Vector::Zero(num_classes);
  for (Index l = 1; l < num_classes; ++l)
    logits[l] = alpha(l - 1, 0) + alpha.row(l - 1).tail(x.size()).dot(x.derived().template cast<double>());
  const double shift = logits.maxCoeff();
  Vector p = (logits.array() - shift).exp().matrix();
  return p / p.sum();
}

/// Row-wise log(sum(exp(.))) with max subtraction.
Vector log_sum_exp_rows(const Matrix& m);

/// Cached design matrices for one (dataset, config) pair.
struct Design {
  Matrix membership;  // n x (p_m + 1), leading column of ones
  Matrix survival;    // n x q
};

Design make_design(const Dataset& data, const ModelConfig& config);
Design make_design(const Matrix& covariates, const ModelConfig& config);

/// n x L matrix of z_il' gamma.
Matrix linear_predictors(const Matrix& survival_design, const Vector& gamma, Index num_classes);

/// n x L matrix of log p_l(x_i; alpha).
Matrix log_membership_probs(const Matrix& membership_design, const Matrix& alpha);

/// n x L matrix of log f_l(T_i, D_i | x_i). The baseline must jump exactly at
/// the dataset's event times.
Matrix class_log_densities(const Dataset& data, const Matrix& eta, const Baseline& baseline);

/// log f_l for a single observation; `cls` is 0-based.
double class_log_density(const Observation& obs, Index cls, const Parameters& params,
                         const ModelConfig& config);

/// Each subject's contribution to the observed-data log-likelihood.
Vector subject_logliks(const Dataset& data, const Design& design, const Parameters& params);

double mixture_loglik(const Dataset& data, const Parameters& params, const ModelConfig& config);
double mixture_loglik(const Dataset& data, const Design& design, const Parameters& params);

/// Parameters with zero regression coefficients and an empty baseline, sized
/// for `config`.
Parameters zero_parameters(const ModelConfig& config);

/// theta = (vec(alpha) row-major, gamma).
Vector pack_theta(const Parameters& params);
void unpack_theta(const Vector& theta, Parameters& params);

/// Human-readable names for theta coordinates, e.g. "alpha[2].x1", "zeta[1].x1", "a[2]".
std::vector<std::string> theta_names(const ModelConfig& config,
                                     const std::vector<std::string>& covariate_names);

void check_dimensions(const Parameters& params, const ModelConfig& config);

}  // namespace lcph
