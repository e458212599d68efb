#include "lcph/model.hpp"

#include <numeric>

namespace lcph {

Dataset::Dataset(const std::vector<Observation>& observations,
                 std::vector<std::string> covariate_names)
    : names_(std::move(covariate_names)) {
  const Index n = static_cast<Index>(observations.size());
  const Index p = n > 0 ? observations.front().covariates.size() : 0;
  times_.resize(n);
  status_.resize(n);
  covariates_.resize(n, p);
  for (Index i = 0; i < n; ++i) {
    const Observation& obs = observations[static_cast<std::size_t>(i)];
    if (obs.covariates.size() != p)
      throw InputError("dataset: observation " + std::to_string(i) +
                       " has a different number of covariates");
    times_[i] = obs.time;
    status_[i] = obs.status;
    covariates_.row(i) = obs.covariates.transpose();
  }
  validate_and_index();
}

Dataset::Dataset(Vector times, IntVector status, Matrix covariates,
                 std::vector<std::string> covariate_names)
    : times_(std::move(times)),
      status_(std::move(status)),
      covariates_(std::move(covariates)),
      names_(std::move(covariate_names)) {
  if (status_.size() != times_.size() || covariates_.rows() != times_.size())
    throw InputError("dataset: times, status and covariates differ in length");
  validate_and_index();
}

void Dataset::validate_and_index() {
  const Index n = times_.size();
  if (n < 1) throw InputError("dataset: no observations");
  if (names_.empty()) {
    for (Index k = 0; k < covariates_.cols(); ++k) names_.push_back("x" + std::to_string(k + 1));
  } else if (static_cast<Index>(names_.size()) != covariates_.cols()) {
    throw InputError("dataset: covariate name count does not match covariate columns");
  }
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(times_[i]) || times_[i] < 0.0)
      throw InputError("dataset: time of observation " + std::to_string(i) +
                       " must be finite and >= 0");
    if (status_[i] != 0 && status_[i] != 1)
      throw InputError("dataset: status of observation " + std::to_string(i) + " must be 0 or 1");
    if (!covariates_.row(i).allFinite())
      throw InputError("dataset: covariates of observation " + std::to_string(i) +
                       " contain missing or non-finite values");
  }

  std::vector<double> events;
  for (Index i = 0; i < n; ++i)
    if (status_[i] == 1) events.push_back(times_[i]);
  num_events_ = static_cast<Index>(events.size());
  if (events.empty()) throw InputError("dataset: no uncensored observations");
  std::sort(events.begin(), events.end());

  std::vector<double> distinct;
  std::vector<int> counts;
  for (double t : events) {
    if (distinct.empty() || distinct.back() != t) {
      distinct.push_back(t);
      counts.push_back(1);
    } else {
      ++counts.back();
    }
  }
  event_times_ = Eigen::Map<const Vector>(distinct.data(), static_cast<Index>(distinct.size()));
  event_counts_ = Eigen::Map<const IntVector>(counts.data(), static_cast<Index>(counts.size()));

  jump_index_.assign(static_cast<std::size_t>(n), -1);
  events_up_to_.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const auto it = std::upper_bound(distinct.begin(), distinct.end(), times_[i]);
    const Index k = static_cast<Index>(it - distinct.begin());
    events_up_to_[static_cast<std::size_t>(i)] = k;
    if (status_[i] == 1) jump_index_[static_cast<std::size_t>(i)] = k - 1;
  }
}

Observation Dataset::operator[](Index i) const {
  return Observation{times_[i], status_[i], covariates_.row(i).transpose()};
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  const Index n = static_cast<Index>(rows.size());
  Vector t(n);
  IntVector d(n);
  Matrix x(n, covariates_.cols());
  for (Index k = 0; k < n; ++k) {
    const Index i = rows[static_cast<std::size_t>(k)];
    if (i < 0 || i >= size()) throw InputError("dataset: subset row out of range");
    t[k] = times_[i];
    d[k] = status_[i];
    x.row(k) = covariates_.row(i);
  }
  return Dataset(std::move(t), std::move(d), std::move(x), names_);
}

ModelConfig ModelConfig::with_all_covariates(const Dataset& data, int num_classes) {
  ModelConfig config;
  config.num_classes = num_classes;
  config.membership_covariates.resize(static_cast<std::size_t>(data.num_covariates()));
  std::iota(config.membership_covariates.begin(), config.membership_covariates.end(), Index{0});
  config.survival_covariates = config.membership_covariates;
  return config;
}

void ModelConfig::validate(const Dataset& data) const {
  if (num_classes < 1) throw InputError("config: number of classes must be >= 1");
  if (!(tolerance > 0.0)) throw InputError("config: tolerance must be > 0");
  if (max_iterations < 1) throw InputError("config: max_iterations must be >= 1");
  auto check = [&](const std::vector<Index>& cols, const char* which) {
    std::vector<Index> sorted = cols;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw InputError(std::string("config: duplicate ") + which + " covariate");
    for (Index c : cols)
      if (c < 0 || c >= data.num_covariates())
        throw InputError(std::string("config: ") + which + " covariate index out of range");
  };
  check(membership_covariates, "membership");
  check(survival_covariates, "survival");
  if (initialization == Initialization::supplied_weights &&
      (supplied_weights.rows() != data.size() || supplied_weights.cols() != num_classes))
    throw InputError("config: supplied weights must be n x L");
}

Vector log_sum_exp_rows(const Matrix& m) {
  Vector out(m.rows());
  for (Index i = 0; i < m.rows(); ++i) {
    const double top = m.row(i).maxCoeff();
    if (!std::isfinite(top)) {
      out[i] = top;
      continue;
    }
    out[i] = top + std::log((m.row(i).array() - top).exp().sum());
  }
  return out;
}

Design make_design(const Matrix& covariates, const ModelConfig& config) {
  const Index n = covariates.rows();
  Design design;
  design.membership.resize(n, config.membership_dim());
  design.membership.col(0).setOnes();
  for (std::size_t k = 0; k < config.membership_covariates.size(); ++k)
    design.membership.col(static_cast<Index>(k) + 1) = covariates.col(config.membership_covariates[k]);
  design.survival.resize(n, config.survival_dim());
  for (std::size_t k = 0; k < config.survival_covariates.size(); ++k)
    design.survival.col(static_cast<Index>(k)) = covariates.col(config.survival_covariates[k]);
  return design;
}

Design make_design(const Dataset& data, const ModelConfig& config) {
  return make_design(data.covariates(), config);
}

Matrix linear_predictors(const Matrix& survival_design, const Vector& gamma, Index num_classes) {
  const Index q = survival_design.cols();
  if (gamma.size() != q * num_classes + num_classes - 1)
    throw InputError("linear_predictors: gamma has wrong length");
  Matrix eta(survival_design.rows(), num_classes);
  eta.col(0) = survival_design * gamma.head(q);
  for (Index l = 1; l < num_classes; ++l) {
    const Index offset = q + (l - 1) * (q + 1);
    eta.col(l) = (eta.col(0) + survival_design * gamma.segment(offset + 1, q)).array() +
                 gamma[offset];
  }
  return eta;
}

Matrix log_membership_probs(const Matrix& membership_design, const Matrix& alpha) {
  const Index n = membership_design.rows();
  const Index num_classes = alpha.rows() + 1;
  Matrix logits = Matrix::Zero(n, num_classes);
  if (num_classes == 1) return logits;
  if (alpha.cols() != membership_design.cols())
    throw InputError("log_membership_probs: alpha has wrong number of columns");
  logits.rightCols(num_classes - 1) = membership_design * alpha.transpose();
  const Vector norm = log_sum_exp_rows(logits);
  logits.colwise() -= norm;
  return logits;
}

namespace {

void check_baseline(const Dataset& data, const Baseline& baseline) {
  if (baseline.size() != data.num_event_times() ||
      baseline.jump_times() != data.event_times())
    throw InputError("baseline hazard must jump exactly at the dataset's event times");
}

}  // namespace

Matrix class_log_densities(const Dataset& data, const Matrix& eta, const Baseline& baseline) {
  check_baseline(data, baseline);
  const Index n = data.size();
  Matrix logf(n, eta.cols());
  const Vector& jumps = baseline.jump_sizes();
  for (Index i = 0; i < n; ++i) {
    const double cum = baseline.value_through(data.events_up_to(i));
    const Index j = data.jump_index(i);
    const double log_jump = j >= 0 ? std::log(jumps[j]) : 0.0;
    for (Index l = 0; l < eta.cols(); ++l) {
      const double e = eta(i, l);
      logf(i, l) = (cum > 0.0 ? -cum * std::exp(e) : 0.0) + (j >= 0 ? log_jump + e : 0.0);
    }
  }
  return logf;
}

double class_log_density(const Observation& obs, Index cls, const Parameters& params,
                         const ModelConfig& config) {
  const Index num_classes = params.num_classes();
  Vector x_bar(config.survival_dim());
  for (std::size_t k = 0; k < config.survival_covariates.size(); ++k)
    x_bar[static_cast<Index>(k)] = obs.covariates[config.survival_covariates[k]];
  const double eta = expand_design(x_bar, cls, num_classes).dot(params.gamma);
  const double cum = params.baseline(obs.time);
  double logf = -cum * std::exp(eta);
  if (obs.status == 1) {
    const auto j = params.baseline.find_jump(obs.time);
    if (!j)
      throw InputError("class_log_density: event time is not a jump time of the baseline");
    logf += std::log(params.baseline.jump_sizes()[*j]) + eta;
  }
  return logf;
}

Vector subject_logliks(const Dataset& data, const Design& design, const Parameters& params) {
  const Index num_classes = params.num_classes();
  const Matrix eta = linear_predictors(design.survival, params.gamma, num_classes);
  const Matrix joint = log_membership_probs(design.membership, params.alpha) +
                       class_log_densities(data, eta, params.baseline);
  return log_sum_exp_rows(joint);
}

double mixture_loglik(const Dataset& data, const Design& design, const Parameters& params) {
  return subject_logliks(data, design, params).sum();
}

double mixture_loglik(const Dataset& data, const Parameters& params, const ModelConfig& config) {
  check_dimensions(params, config);
  return mixture_loglik(data, make_design(data, config), params);
}

Parameters zero_parameters(const ModelConfig& config) {
  Parameters params;
  params.alpha = Matrix::Zero(config.num_classes - 1, config.membership_dim());
  params.gamma = Vector::Zero(config.gamma_dim());
  return params;
}

Vector pack_theta(const Parameters& params) {
  Vector theta(params.alpha.size() + params.gamma.size());
  Index k = 0;
  for (Index r = 0; r < params.alpha.rows(); ++r)
    for (Index c = 0; c < params.alpha.cols(); ++c) theta[k++] = params.alpha(r, c);
  theta.tail(params.gamma.size()) = params.gamma;
  return theta;
}

void unpack_theta(const Vector& theta, Parameters& params) {
  if (theta.size() != params.alpha.size() + params.gamma.size())
    throw InputError("unpack_theta: theta has wrong length");
  Index k = 0;
  for (Index r = 0; r < params.alpha.rows(); ++r)
    for (Index c = 0; c < params.alpha.cols(); ++c) params.alpha(r, c) = theta[k++];
  params.gamma = theta.tail(params.gamma.size());
}

std::vector<std::string> theta_names(const ModelConfig& config,
                                     const std::vector<std::string>& covariate_names) {
  auto name_of = [&](Index c) {
    return c < static_cast<Index>(covariate_names.size()) ? covariate_names[static_cast<std::size_t>(c)]
                                                          : "x" + std::to_string(c + 1);
  };
  std::vector<std::string> names;
  for (int l = 2; l <= config.num_classes; ++l) {
    const std::string prefix = "alpha[" + std::to_string(l) + "].";
    names.push_back(prefix + "intercept");
    for (Index c : config.membership_covariates) names.push_back(prefix + name_of(c));
  }
  for (Index c : config.survival_covariates) names.push_back("zeta[1]." + name_of(c));
  for (int l = 2; l <= config.num_classes; ++l) {
    names.push_back("a[" + std::to_string(l) + "]");
    for (Index c : config.survival_covariates)
      names.push_back("zeta[" + std::to_string(l) + "]." + name_of(c));
  }
  return names;
}

void check_dimensions(const Parameters& params, const ModelConfig& config) {
  if (params.alpha.rows() != config.num_classes - 1 ||
      (config.num_classes > 1 && params.alpha.cols() != config.membership_dim()))
    throw InputError("parameters: alpha dimensions do not match the configuration");
  if (params.gamma.size() != config.gamma_dim())
    throw InputError("parameters: gamma length does not match the configuration");
  if (!params.alpha.allFinite() || !params.gamma.allFinite())
    throw InputError("parameters: non-finite entries");
}

}  // namespace lcph
