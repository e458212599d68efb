#include "lcph/em.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace lcph {

RiskSetIndex RiskSetIndex::build(const Dataset& data) {
  RiskSetIndex risk;
  const Index n = data.size();
  risk.order.resize(static_cast<std::size_t>(n));
  std::iota(risk.order.begin(), risk.order.end(), Index{0});
  const Vector& t = data.times();
  std::stable_sort(risk.order.begin(), risk.order.end(),
                   [&](Index a, Index b) { return t[a] > t[b]; });

  const Index m = data.num_event_times();
  risk.risk_size.resize(static_cast<std::size_t>(m));
  risk.events.assign(static_cast<std::size_t>(m), {});
  Index k = 0;
  for (Index j = m - 1; j >= 0; --j) {
    while (k < n && t[risk.order[static_cast<std::size_t>(k)]] >= data.event_times()[j]) ++k;
    risk.risk_size[static_cast<std::size_t>(j)] = k;
  }
  for (Index i = 0; i < n; ++i)
    if (data.jump_index(i) >= 0) risk.events[static_cast<std::size_t>(data.jump_index(i))].push_back(i);
  return risk;
}

namespace {

// Joint log p_l f_l, n x L.
Matrix joint_log_density(const Dataset& data, const Design& design, const Parameters& params) {
  const Matrix eta = linear_predictors(design.survival, params.gamma, params.num_classes());
  return log_membership_probs(design.membership, params.alpha) +
         class_log_densities(data, eta, params.baseline);
}

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Vector flatten(const Matrix& alpha) {
  RowMajorMatrix rm = alpha;
  return Eigen::Map<const Vector>(rm.data(), rm.size());
}

Matrix unflatten(const Vector& v, Index rows, Index cols) {
  return Eigen::Map<const RowMajorMatrix>(v.data(), rows, cols);
}

struct AlphaDerivatives {
  double value = 0.0;
  Vector gradient;
  Matrix information;  // negative Hessian
};

AlphaDerivatives alpha_derivatives(const Matrix& x, const PosteriorWeights& w, const Matrix& alpha,
                                   bool with_derivatives) {
  AlphaDerivatives out;
  const Matrix logp = log_membership_probs(x, alpha);
  for (Index i = 0; i < w.rows(); ++i)
    for (Index l = 0; l < w.cols(); ++l)
      if (w(i, l) > 0.0) out.value += w(i, l) * logp(i, l);
  if (!with_derivatives) return out;

  const Index dim = x.cols();
  const Index classes = alpha.rows();
  const Matrix p = logp.array().exp().matrix();
  out.gradient.resize(classes * dim);
  out.information.resize(classes * dim, classes * dim);
  for (Index a = 0; a < classes; ++a) {
    out.gradient.segment(a * dim, dim) = x.transpose() * (w.col(a + 1) - p.col(a + 1));
    for (Index b = a; b < classes; ++b) {
      Vector c = -p.col(a + 1).cwiseProduct(p.col(b + 1));
      if (a == b) c += p.col(a + 1);
      const Matrix block = x.transpose() * c.asDiagonal() * x;
      out.information.block(a * dim, b * dim, dim, dim) = block;
      if (b != a) out.information.block(b * dim, a * dim, dim, dim) = block.transpose();
    }
  }
  return out;
}

double accept_slack(double value) { return 1e-12 * std::max(1.0, std::abs(value)); }

// Consecutive full-size Newton steps with growing coefficients: the
// signature of a likelihood maximised only at infinity.
constexpr int kDivergingSteps = 8;
constexpr double kMaxMembershipLogit = 30.0;

}  // namespace

EStepResult e_step_full(const Dataset& data, const Design& design, const Parameters& params) {
  Matrix joint = joint_log_density(data, design, params);
  EStepResult out;
  out.subject_logliks = log_sum_exp_rows(joint);
  for (Index i = 0; i < out.subject_logliks.size(); ++i)
    if (!std::isfinite(out.subject_logliks[i]))
      throw NumericalError("e-step: every class density vanishes for subject " + std::to_string(i));
  joint.colwise() -= out.subject_logliks;
  out.weights = joint.array().exp().matrix();
  out.loglik = out.subject_logliks.sum();
  return out;
}

PosteriorWeights e_step(const Dataset& data, const Design& design, const Parameters& params) {
  return e_step_full(data, design, params).weights;
}

PosteriorWeights e_step(const Dataset& data, const Parameters& params, const ModelConfig& config) {
  check_dimensions(params, config);
  return e_step(data, make_design(data, config), params);
}

Baseline breslow_update(const Dataset& data, const RiskSetIndex& risk, const Matrix& survival_design,
                        const PosteriorWeights& weights, const Vector& gamma) {
  const Index num_classes = weights.cols();
  const Matrix eta = linear_predictors(survival_design, gamma, num_classes);
  const double shift = eta.maxCoeff();
  const Vector score = (weights.array() * (eta.array() - shift).exp()).rowwise().sum();

  const Index m = data.num_event_times();
  Vector jumps(m);
  double cum = 0.0;
  Index k = 0;
  for (Index j = m - 1; j >= 0; --j) {
    const Index size = risk.risk_size[static_cast<std::size_t>(j)];
    for (; k < size; ++k) cum += score[risk.order[static_cast<std::size_t>(k)]];
    const double denom = cum * std::exp(shift);
    if (!(denom > 0.0) || !std::isfinite(denom))
      throw NumericalError("breslow: risk-set denominator is zero or not finite at event time " +
                           std::to_string(data.event_times()[j]));
    jumps[j] = data.event_counts()[j] / denom;
  }
  return Baseline(data.event_times(), jumps);
}

Baseline breslow_update(const Dataset& data, const PosteriorWeights& weights, const Vector& gamma,
                        const ModelConfig& config) {
  if (!is_row_stochastic(weights)) throw InputError("breslow: weights are not row-stochastic");
  const Design design = make_design(data, config);
  return breslow_update(data, RiskSetIndex::build(data), design.survival, weights, gamma);
}

double weighted_multinomial_loglik(const Matrix& membership_design, const PosteriorWeights& weights,
                                   const Matrix& alpha) {
  return alpha_derivatives(membership_design, weights, alpha, false).value;
}

Matrix m_step_alpha(const Matrix& membership_design, const PosteriorWeights& weights,
                    const Matrix& alpha_init, const NewtonOptions& options) {
  if (alpha_init.rows() == 0) return alpha_init;
  if (weights.cols() != alpha_init.rows() + 1 || weights.rows() != membership_design.rows())
    throw InputError("m_step_alpha: weights do not match the design");

  const Index rows = alpha_init.rows();
  const Index cols = alpha_init.cols();
  Vector beta = flatten(alpha_init);
  AlphaDerivatives current = alpha_derivatives(membership_design, weights, alpha_init, true);
  int diverging = 0;

  for (int it = 0; it < options.max_iterations; ++it) {
    if (current.gradient.norm() < options.gradient_tolerance) return unflatten(beta, rows, cols);

    Eigen::LLT<Matrix> llt(current.information);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
      throw SeparationError("m_step_alpha: Hessian is singular (separation or empty class)", it);
    const Vector step = llt.solve(current.gradient);
    if (!step.allFinite()) throw NumericalError("m_step_alpha: non-finite Newton step", it);

    double scale = 1.0;
    bool accepted = false;
    AlphaDerivatives next;
    Vector candidate;
    for (int h = 0; h <= options.max_halvings; ++h, scale *= 0.5) {
      candidate = beta + scale * step;
      next = alpha_derivatives(membership_design, weights, unflatten(candidate, rows, cols), false);
      if (std::isfinite(next.value) && next.value >= current.value - accept_slack(current.value)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NumericalError("m_step_alpha: step-halving exhausted", it);

    const bool growing = candidate.norm() > beta.norm();
    diverging = (scale == 1.0 && step.norm() >= 0.5 && growing) ? diverging + 1 : 0;
    beta = candidate;
    const Matrix alpha = unflatten(beta, rows, cols);
    if ((membership_design * alpha.transpose()).cwiseAbs().maxCoeff() > kMaxMembershipLogit ||
        diverging >= kDivergingSteps)
      throw SeparationError("m_step_alpha: coefficients diverge (separation)", it);
    current = alpha_derivatives(membership_design, weights, alpha, true);
  }
  if (current.gradient.norm() < options.gradient_tolerance) return unflatten(beta, rows, cols);
  throw NumericalError("m_step_alpha: Newton iterations exhausted", options.max_iterations);
}

namespace {

struct GammaDerivatives {
  double value = 0.0;
  Vector score;
  Matrix information;
};

GammaDerivatives gamma_derivatives(const Dataset& data, const RiskSetIndex& risk,
                                   const Matrix& xbar, const PosteriorWeights& w,
                                   const Vector& gamma, bool with_derivatives) {
  const Index num_classes = w.cols();
  const Index q = xbar.cols();
  const Index dim = gamma.size();
  const Matrix eta = linear_predictors(xbar, gamma, num_classes);
  const double shift = eta.maxCoeff();

  GammaDerivatives out;
  double s0 = 0.0;
  Vector s1, z;
  Matrix s2;
  if (with_derivatives) {
    out.score = Vector::Zero(dim);
    out.information = Matrix::Zero(dim, dim);
    s1 = Vector::Zero(dim);
    s2 = Matrix::Zero(dim, dim);
    z.resize(dim);
  }

  auto fill_z = [&](Index i, Index l) {
    z.setZero();
    z.head(q) = xbar.row(i).transpose();
    if (l > 0) {
      const Index offset = q + (l - 1) * (q + 1);
      z[offset] = 1.0;
      z.segment(offset + 1, q) = xbar.row(i).transpose();
    }
  };

  const Index m = data.num_event_times();
  Index k = 0;
  for (Index j = m - 1; j >= 0; --j) {
    const Index size = risk.risk_size[static_cast<std::size_t>(j)];
    for (; k < size; ++k) {
      const Index i = risk.order[static_cast<std::size_t>(k)];
      for (Index l = 0; l < num_classes; ++l) {
        const double c = w(i, l) * std::exp(eta(i, l) - shift);
        if (c == 0.0) continue;
        s0 += c;
        if (with_derivatives) {
          fill_z(i, l);
          s1 += c * z;
          s2.selfadjointView<Eigen::Upper>().rankUpdate(z, c);
        }
      }
    }
    const auto& tied = risk.events[static_cast<std::size_t>(j)];
    const double count = static_cast<double>(tied.size());
    for (Index i : tied) {
      out.value += w.row(i).dot(eta.row(i));
      if (with_derivatives)
        for (Index l = 0; l < num_classes; ++l) {
          if (w(i, l) == 0.0) continue;
          fill_z(i, l);
          out.score += w(i, l) * z;
        }
    }
    out.value -= count * (std::log(s0) + shift);
    if (with_derivatives) {
      out.score -= (count / s0) * s1;
      // Only the upper triangle is meaningful; it is mirrored below at the end.
      out.information.noalias() += (count / s0) * s2 - (count / (s0 * s0)) * s1 * s1.transpose();
    }
  }
  if (with_derivatives)
    out.information.triangularView<Eigen::StrictlyLower>() =
        out.information.transpose().triangularView<Eigen::StrictlyLower>();
  return out;
}

}  // namespace

double weighted_partial_loglik(const Dataset& data, const RiskSetIndex& risk,
                               const Matrix& survival_design, const PosteriorWeights& weights,
                               const Vector& gamma) {
  return gamma_derivatives(data, risk, survival_design, weights, gamma, false).value;
}

GammaUpdate m_step_gamma(const Dataset& data, const RiskSetIndex& risk,
                         const Matrix& survival_design, const PosteriorWeights& weights,
                         const Vector& gamma_init, const NewtonOptions& options) {
  GammaUpdate result;
  result.gamma = gamma_init;
  const Index dim = gamma_init.size();
  if (dim == 0) return result;
  if (data.num_events() == 0) throw InputError("m_step_gamma: no events");

  GammaDerivatives current =
      gamma_derivatives(data, risk, survival_design, weights, result.gamma, true);
  const double top = std::max(1.0, current.information.diagonal().maxCoeff());
  std::vector<Index> active;
  for (Index k = 0; k < dim; ++k) {
    if (current.information(k, k) > 1e-12 * top)
      active.push_back(k);
    else
      result.frozen.push_back(k);
  }
  const Index na = static_cast<Index>(active.size());
  auto active_score = [&](const GammaDerivatives& d) {
    Vector s(na);
    for (Index a = 0; a < na; ++a) s[a] = d.score[active[static_cast<std::size_t>(a)]];
    return s;
  };

  for (int it = 0; it <= options.max_iterations; ++it) {
    const Vector score = active_score(current);
    result.score_norm = score.norm();
    result.iterations = it;
    if (result.score_norm < options.gradient_tolerance) return result;
    if (it == options.max_iterations) break;

    Matrix info(na, na);
    for (Index a = 0; a < na; ++a)
      for (Index b = 0; b < na; ++b)
        info(a, b) = current.information(active[static_cast<std::size_t>(a)],
                                         active[static_cast<std::size_t>(b)]);
    Eigen::LLT<Matrix> llt(info);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
      throw NumericalError("m_step_gamma: information matrix is singular", it);
    const Vector step = llt.solve(score);
    if (!step.allFinite()) throw NumericalError("m_step_gamma: non-finite Newton step", it);

    double scale = 1.0;
    bool accepted = false;
    Vector candidate;
    for (int h = 0; h <= options.max_halvings; ++h, scale *= 0.5) {
      candidate = result.gamma;
      for (Index a = 0; a < na; ++a) candidate[active[static_cast<std::size_t>(a)]] += scale * step[a];
      const double value =
          gamma_derivatives(data, risk, survival_design, weights, candidate, false).value;
      if (std::isfinite(value) && value >= current.value - accept_slack(current.value)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NumericalError("m_step_gamma: step-halving exhausted", it);
    result.gamma = candidate;
    current = gamma_derivatives(data, risk, survival_design, weights, result.gamma, true);
  }
  throw NumericalError("m_step_gamma: Newton iterations exhausted", options.max_iterations);
}

bool aitken_stop(std::span<const double> history, double tol) {
  const std::size_t n = history.size();
  if (n < 3) return false;
  const double l2 = history[n - 1], l1 = history[n - 2], l0 = history[n - 3];
  const double d_last = l2 - l1;
  const double d_prev = l1 - l0;
  if (d_last == 0.0 || d_prev == 0.0) return true;
  if (n < 4) return false;
  const double d_before = l0 - history[n - 4];
  if (d_before == 0.0) return true;

  const double a_last = d_last / d_prev;
  const double a_prev = d_prev / d_before;
  if (a_last == 1.0 || a_prev == 1.0) return false;
  const double accel_last = l1 + d_last / (1.0 - a_last);
  const double accel_prev = l0 + d_prev / (1.0 - a_prev);
  if (!std::isfinite(accel_last) || !std::isfinite(accel_prev)) return false;
  return std::abs(accel_last - accel_prev) < tol;
}

std::vector<int> kmeans_1d(std::span<const double> values, int k, std::mt19937_64& rng,
                           int restarts) {
  const std::size_t n = values.size();
  if (k < 1) throw InputError("kmeans_1d: k must be >= 1");
  if (n == 0) return {};
  std::vector<int> best_labels(n, 0);
  if (k == 1) return best_labels;

  std::vector<double> best_centers;
  double best_sse = std::numeric_limits<double>::infinity();
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (int attempt = 0; attempt < std::max(1, restarts); ++attempt) {
    // k-means++ seeding
    std::vector<double> centers;
    centers.push_back(values[static_cast<std::size_t>(unif(rng) * static_cast<double>(n)) % n]);
    std::vector<double> dist(n);
    while (static_cast<int>(centers.size()) < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (double c : centers) best = std::min(best, (values[i] - c) * (values[i] - c));
        dist[i] = best;
        total += best;
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        double u = unif(rng) * total;
        for (pick = 0; pick + 1 < n; ++pick) {
          u -= dist[pick];
          if (u < 0.0) break;
        }
      } else {
        pick = static_cast<std::size_t>(unif(rng) * static_cast<double>(n)) % n;
      }
      centers.push_back(values[pick]);
    }

    std::vector<int> labels(n, -1);
    for (int iter = 0; iter < 1000; ++iter) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        int arg = 0;
        for (int c = 1; c < k; ++c)
          if (std::abs(values[i] - centers[static_cast<std::size_t>(c)]) <
              std::abs(values[i] - centers[static_cast<std::size_t>(arg)]))
            arg = c;
        if (labels[i] != arg) {
          labels[i] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
      std::vector<int> count(static_cast<std::size_t>(k), 0);
      for (std::size_t i = 0; i < n; ++i) {
        sum[static_cast<std::size_t>(labels[i])] += values[i];
        ++count[static_cast<std::size_t>(labels[i])];
      }
      for (int c = 0; c < k; ++c)
        if (count[static_cast<std::size_t>(c)] > 0)
          centers[static_cast<std::size_t>(c)] = sum[static_cast<std::size_t>(c)] / count[static_cast<std::size_t>(c)];
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = values[i] - centers[static_cast<std::size_t>(labels[i])];
      sse += d * d;
    }
    if (sse < best_sse) {
      best_sse = sse;
      best_labels = labels;
      best_centers = centers;
    }
  }

  std::vector<int> rank(static_cast<std::size_t>(k));
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) {
    return best_centers[static_cast<std::size_t>(a)] < best_centers[static_cast<std::size_t>(b)];
  });
  std::vector<int> relabel(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) relabel[static_cast<std::size_t>(rank[static_cast<std::size_t>(r)])] = r;
  for (int& label : best_labels) label = relabel[static_cast<std::size_t>(label)];
  return best_labels;
}

PosteriorWeights label_weights(std::span<const int> labels, int num_classes, double own) {
  const Index n = static_cast<Index>(labels.size());
  if (num_classes == 1) return Matrix::Ones(n, 1);
  const double other = (1.0 - own) / (num_classes - 1);
  PosteriorWeights w = Matrix::Constant(n, num_classes, other);
  for (Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= num_classes) throw InputError("label_weights: label out of range");
    w(i, label) = own;
  }
  return w;
}

bool is_row_stochastic(const PosteriorWeights& weights, double tol) {
  if (!weights.allFinite()) return false;
  if ((weights.array() < 0.0).any() || (weights.array() > 1.0 + tol).any()) return false;
  return ((weights.rowwise().sum().array() - 1.0).abs() <= tol).all();
}

PosteriorWeights initialize_weights(const Dataset& data, const ModelConfig& config) {
  const Index n = data.size();
  const int num_classes = config.num_classes;
  if (num_classes < 1) throw InputError("initialize_weights: number of classes must be >= 1");
  if (num_classes == 1) return Matrix::Ones(n, 1);

  std::mt19937_64 rng(config.seed);
  switch (config.initialization) {
    case Initialization::random: {
      std::exponential_distribution<double> expo(1.0);
      PosteriorWeights w(n, num_classes);
      for (Index i = 0; i < n; ++i) {
        for (Index l = 0; l < num_classes; ++l) w(i, l) = expo(rng);
        w.row(i) /= w.row(i).sum();
      }
      return w;
    }
    case Initialization::kmeans: {
      const std::vector<double> t(data.times().data(), data.times().data() + n);
      return label_weights(kmeans_1d(t, num_classes, rng, 10), num_classes);
    }
    case Initialization::supplied_weights:
      if (config.supplied_weights.rows() != n || config.supplied_weights.cols() != num_classes)
        throw InputError("initialize_weights: supplied weights must be n x L");
      if (!is_row_stochastic(config.supplied_weights))
        throw InputError("initialize_weights: supplied weights are not row-stochastic");
      return config.supplied_weights;
  }
  throw InputError("initialize_weights: unknown initialization");
}

namespace {

std::atomic<std::uint64_t> g_fits{0};
std::atomic<std::uint64_t> g_iterations{0};
std::atomic<double> g_max_drop{0.0};

void record_drop(double drop) {
  double seen = g_max_drop.load(std::memory_order_relaxed);
  while (drop > seen && !g_max_drop.compare_exchange_weak(seen, drop, std::memory_order_relaxed)) {
  }
}

}  // namespace

FitMonitor fit_monitor() {
  return {g_fits.load(), g_iterations.load(), g_max_drop.load()};
}

void reset_fit_monitor() {
  g_fits = 0;
  g_iterations = 0;
  g_max_drop = 0.0;
}

EmState fit(const Dataset& data, const ModelConfig& config) {
  config.validate(data);
  return fit_from_weights(data, config, initialize_weights(data, config));
}

EmState fit_from_weights(const Dataset& data, const ModelConfig& config,
                         const PosteriorWeights& initial_weights) {
  config.validate(data);
  if (initial_weights.rows() != data.size() || initial_weights.cols() != config.num_classes)
    throw InputError("fit: initial weights must be n x L");
  if (!is_row_stochastic(initial_weights))
    throw InputError("fit: initial weights are not row-stochastic");

  const Design design = make_design(data, config);
  const RiskSetIndex risk = RiskSetIndex::build(data);

  EmState state;
  state.params = zero_parameters(config);
  state.weights = initial_weights;
  g_fits.fetch_add(1, std::memory_order_relaxed);

  for (int it = 1; it <= config.max_iterations; ++it) {
    state.iteration = it;
    g_iterations.fetch_add(1, std::memory_order_relaxed);
    try {
      state.params.alpha = m_step_alpha(design.membership, state.weights, state.params.alpha);
      GammaUpdate g = m_step_gamma(data, risk, design.survival, state.weights, state.params.gamma);
      state.params.gamma = std::move(g.gamma);
      state.frozen_gamma = std::move(g.frozen);
      state.params.baseline =
          breslow_update(data, risk, design.survival, state.weights, state.params.gamma);
      EStepResult post = e_step_full(data, design, state.params);
      state.weights = std::move(post.weights);
      if (!state.loglik_history.empty()) {
        const double drop = state.loglik_history.back() - post.loglik;
        state.max_loglik_drop = std::max(state.max_loglik_drop, drop);
        record_drop(drop);
      }
      state.loglik_history.push_back(post.loglik);
    } catch (const SeparationError& e) {
      throw SeparationError(std::string(e.what()) + " (EM iteration " + std::to_string(it) + ")", it);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (EM iteration " + std::to_string(it) + ")", it);
    }
    if (aitken_stop(state.loglik_history, config.tolerance)) {
      state.converged = true;
      break;
    }
  }
  return state;
}

EmState fit_with_restarts(const Dataset& data, const ModelConfig& config, int restarts) {
  restarts = std::max(1, restarts);
  std::optional<EmState> best;
  std::string last_error;
  for (int k = 0; k < restarts; ++k) {
    ModelConfig attempt = config;
    if (k > 0) {
      attempt.initialization = Initialization::random;
      attempt.seed = config.seed + static_cast<std::uint64_t>(k);
    }
    try {
      EmState state = fit(data, attempt);
      if (!best || state.loglik() > best->loglik()) best = std::move(state);
    } catch (const NumericalError& e) {
      last_error = e.what();
    }
  }
  if (!best) throw NumericalError("every restart failed; last error: " + last_error);
  best->restarts = restarts;
  return *best;
}

}  // namespace lcph
