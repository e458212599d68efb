#include "lcph/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include "lcph/parallel.hpp"

namespace lcph {

double SurvivalCurve::operator()(double t) const {
  const auto it = std::upper_bound(times.data(), times.data() + times.size(), t);
  const Index k = static_cast<Index>(it - times.data());
  return k == 0 ? 1.0 : values[k - 1];
}

double SurvivalCurve::left_limit(double t) const {
  const auto it = std::lower_bound(times.data(), times.data() + times.size(), t);
  const Index k = static_cast<Index>(it - times.data());
  return k == 0 ? 1.0 : values[k - 1];
}

SurvivalCurve kaplan_meier(std::span<const double> times, std::span<const int> status,
                           KaplanMeierTarget target) {
  if (times.size() != status.size()) throw InputError("kaplan_meier: times and status differ in length");
  if (times.empty()) throw InputError("kaplan_meier: no observations");
  const int event_code = target == KaplanMeierTarget::event ? 1 : 0;

  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

  std::vector<double> out_t, out_s;
  double surv = 1.0;
  std::size_t at_risk = times.size();
  for (std::size_t k = 0; k < order.size();) {
    const double t = times[order[k]];
    std::size_t events = 0, leaving = 0;
    for (; k < order.size() && times[order[k]] == t; ++k, ++leaving)
      if (status[order[k]] == event_code) ++events;
    if (events > 0) {
      surv *= 1.0 - static_cast<double>(events) / static_cast<double>(at_risk);
      out_t.push_back(t);
      out_s.push_back(surv);
    }
    at_risk -= leaving;
  }
  SurvivalCurve curve;
  curve.times = Eigen::Map<const Vector>(out_t.data(), static_cast<Index>(out_t.size()));
  curve.values = Eigen::Map<const Vector>(out_s.data(), static_cast<Index>(out_s.size()));
  return curve;
}

SurvivalCurve kaplan_meier(const Dataset& data, KaplanMeierTarget target) {
  return kaplan_meier(std::span<const double>(data.times().data(), static_cast<std::size_t>(data.size())),
                      std::span<const int>(data.status().data(), static_cast<std::size_t>(data.size())),
                      target);
}

SurvivalPredictor::SurvivalPredictor(Parameters params, ModelConfig config)
    : params_(std::move(params)), config_(std::move(config)) {
  check_dimensions(params_, config_);
}

Design SurvivalPredictor::design_for(const Matrix& covariates) const {
  const Index needed = [&] {
    Index top = -1;
    for (Index c : config_.membership_covariates) top = std::max(top, c);
    for (Index c : config_.survival_covariates) top = std::max(top, c);
    return top + 1;
  }();
  if (covariates.cols() < needed) throw InputError("predictor: too few covariate columns");
  return make_design(covariates, config_);
}

Matrix SurvivalPredictor::class_survival(const Matrix& covariates, double t) const {
  const Design design = design_for(covariates);
  const Matrix eta = linear_predictors(design.survival, params_.gamma, params_.num_classes());
  const double cum = params_.baseline(t);
  return (-cum * eta.array().exp()).exp().matrix();
}

Matrix SurvivalPredictor::survival(const Matrix& covariates, std::span<const double> times) const {
  const Design design = design_for(covariates);
  // 1 - sum_l p_l (1 - S_l) is exactly 1 at t = 0 whatever the rounding of p
  const Matrix prob = log_membership_probs(design.membership, params_.alpha).array().exp().matrix();
  const Matrix risk = linear_predictors(design.survival, params_.gamma, params_.num_classes())
                          .array()
                          .exp()
                          .matrix();
  Matrix out(covariates.rows(), static_cast<Index>(times.size()));
  for (std::size_t g = 0; g < times.size(); ++g) {
    const double cum = params_.baseline(times[g]);
    out.col(static_cast<Index>(g)) =
        (1.0 + (prob.array() * (-cum * risk.array()).unaryExpr([](double v) { return std::expm1(v); }))
                   .rowwise()
                   .sum())
            .max(0.0)
            .matrix();
  }
  return out;
}

Vector SurvivalPredictor::survival_paired(const Matrix& covariates, const Vector& times) const {
  if (times.size() != covariates.rows()) throw InputError("predictor: times and rows differ in length");
  const Design design = design_for(covariates);
  const Matrix prob = log_membership_probs(design.membership, params_.alpha).array().exp().matrix();
  const Matrix risk = linear_predictors(design.survival, params_.gamma, params_.num_classes())
                          .array()
                          .exp()
                          .matrix();
  Vector out(times.size());
  for (Index i = 0; i < times.size(); ++i) {
    const double cum = params_.baseline(times[i]);
    const double drop =
        (prob.row(i).array() * (-cum * risk.row(i).array()).unaryExpr([](double v) { return std::expm1(v); }))
            .sum();
    out[i] = std::max(0.0, 1.0 + drop);
  }
  return out;
}

double SurvivalPredictor::operator()(const Vector& covariates, double t) const {
  const double times[] = {t};
  return survival(covariates.transpose(), times)(0, 0);
}

double predicted_survival(const Vector& covariates, double t, const Parameters& params,
                          const ModelConfig& config) {
  if (t < 0.0) throw InputError("predicted_survival: t must be >= 0");
  return SurvivalPredictor(params, config)(covariates, t);
}

BrierCurve brier_scores(const Dataset& test, const Matrix& surv_grid, const Vector& surv_own,
                        const SurvivalCurve& censoring, std::span<const double> grid) {
  const Index n = test.size();
  const Index num_times = static_cast<Index>(grid.size());
  if (surv_grid.rows() != n || surv_grid.cols() != num_times || surv_own.size() != n)
    throw InputError("brier_scores: prediction matrix does not match the data and grid");

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  BrierCurve curve;
  curve.times = Eigen::Map<const Vector>(grid.data(), num_times);
  curve.bs1.resize(num_times);
  curve.bs2.resize(num_times);

  Vector censoring_at_event(n);
  for (Index i = 0; i < n; ++i) censoring_at_event[i] = censoring.left_limit(test.times()[i]);

  for (Index g = 0; g < num_times; ++g) {
    const double t = grid[static_cast<std::size_t>(g)];
    const double g_t = censoring(t);
    double sum1 = 0.0, sum2 = 0.0;
    bool defined = g_t > 0.0;
    for (Index i = 0; i < n && defined; ++i) {
      const double s = surv_grid(i, g);
      const double ti = test.times()[i];
      if (ti > t) {
        sum1 += (1.0 - s) * (1.0 - s) / g_t;
        sum2 += (1.0 - s) * (1.0 - s);
      } else if (test.status()[i] == 1) {
        if (!(censoring_at_event[i] > 0.0)) {
          defined = false;
          break;
        }
        sum1 += s * s / censoring_at_event[i];
        sum2 += s * s;
      } else if (surv_own[i] > 0.0) {
        const double ratio = s / surv_own[i];
        sum2 += (1.0 - s) * (1.0 - s) * ratio + s * s * (1.0 - ratio);
      } else {
        sum2 += s * s;
      }
    }
    curve.bs1[g] = defined ? sum1 / static_cast<double>(n) : nan;
    curve.bs2[g] = defined ? sum2 / static_cast<double>(n) : nan;
  }
  return curve;
}

BrierCurve brier_scores(const Dataset& test, const SurvivalPredictor& predictor,
                        const SurvivalCurve& censoring, std::span<const double> grid) {
  return brier_scores(test, predictor.survival(test.covariates(), grid),
                      predictor.survival_paired(test.covariates(), test.times()), censoring, grid);
}

std::vector<double> event_time_grid(const Dataset& data, double horizon) {
  std::vector<double> grid;
  for (Index j = 0; j < data.num_event_times(); ++j) {
    const double t = data.event_times()[j];
    if (t > 0.0 && t <= horizon) grid.push_back(t);
  }
  return grid;
}

std::vector<int> stratified_folds(const Dataset& data, int folds, std::uint64_t seed) {
  if (folds < 2) throw InputError("stratified_folds: need at least two folds");
  std::mt19937_64 rng(seed);
  std::vector<int> labels(static_cast<std::size_t>(data.size()), 0);
  for (int stratum = 1; stratum >= 0; --stratum) {
    std::vector<Index> members;
    for (Index i = 0; i < data.size(); ++i)
      if (data.status()[i] == stratum) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < members.size(); ++k)
      labels[static_cast<std::size_t>(members[k])] = static_cast<int>(k % static_cast<std::size_t>(folds));
  }
  return labels;
}

namespace {

BrierCurve average_curves(const std::vector<BrierCurve>& curves, std::span<const double> grid) {
  BrierCurve avg;
  const Index num_times = static_cast<Index>(grid.size());
  avg.times = Eigen::Map<const Vector>(grid.data(), num_times);
  avg.bs1 = Vector::Zero(num_times);
  avg.bs2 = Vector::Zero(num_times);
  avg.folds = static_cast<int>(curves.size());
  for (Index g = 0; g < num_times; ++g) {
    double s1 = 0.0, s2 = 0.0;
    int c1 = 0, c2 = 0;
    for (const BrierCurve& c : curves) {
      if (std::isfinite(c.bs1[g])) s1 += c.bs1[g], ++c1;
      if (std::isfinite(c.bs2[g])) s2 += c.bs2[g], ++c2;
    }
    avg.bs1[g] = c1 > 0 ? s1 / c1 : std::numeric_limits<double>::quiet_NaN();
    avg.bs2[g] = c2 > 0 ? s2 / c2 : std::numeric_limits<double>::quiet_NaN();
  }
  return avg;
}

}  // namespace

CrossValidatedBrier cross_validated_brier(const Dataset& data, const ModelConfig& model,
                                          const ModelConfig& comparator,
                                          std::span<const double> grid,
                                          const CrossValidationOptions& options) {
  const int k_folds = options.folds;
  if (k_folds < 2) throw InputError("cross_validated_brier: need at least two folds");
  if (data.num_events() < k_folds)
    throw InputError("cross_validated_brier: fewer events than folds");
  const std::vector<int> labels = stratified_folds(data, k_folds, options.seed);

  std::vector<std::optional<BrierCurve>> model_curves(static_cast<std::size_t>(k_folds));
  std::vector<std::optional<BrierCurve>> comparator_curves(static_cast<std::size_t>(k_folds));
  std::vector<std::string> notes(static_cast<std::size_t>(k_folds));

  parallel_for(static_cast<std::size_t>(k_folds), options.threads, [&](std::size_t f) {
    std::vector<Index> train_rows, test_rows;
    for (Index i = 0; i < data.size(); ++i)
      (labels[static_cast<std::size_t>(i)] == static_cast<int>(f) ? test_rows : train_rows).push_back(i);
    const Dataset train = data.subset(train_rows);
    const Dataset test = data.subset(test_rows);
    const SurvivalCurve censoring = kaplan_meier(test, KaplanMeierTarget::censoring);

    auto score = [&](const ModelConfig& config, int restarts, const char* which,
                     std::optional<BrierCurve>& slot) {
      try {
        const EmState state = fit_with_restarts(train, config, restarts);
        slot = brier_scores(test, SurvivalPredictor(state.params, config), censoring, grid);
      } catch (const std::exception& e) {
        notes[f] += std::string(notes[f].empty() ? "" : "; ") + "fold " + std::to_string(f + 1) +
                    " " + which + ": " + e.what();
      }
    };
    score(model, options.restarts, "model", model_curves[f]);
    score(comparator, 1, "comparator", comparator_curves[f]);
  });

  CrossValidatedBrier out;
  for (std::size_t f = 0; f < static_cast<std::size_t>(k_folds); ++f) {
    if (model_curves[f]) out.model_folds.push_back(*model_curves[f]);
    if (comparator_curves[f]) out.comparator_folds.push_back(*comparator_curves[f]);
    if (!notes[f].empty()) out.skipped.push_back(notes[f]);
  }
  if (out.model_folds.size() < 3 || out.comparator_folds.size() < 3)
    throw NumericalError("cross_validated_brier: fewer than three folds fitted successfully");
  out.model = average_curves(out.model_folds, grid);
  out.comparator = average_curves(out.comparator_folds, grid);
  return out;
}

GoodnessOfFit goodness_of_fit(const Dataset& data, const Parameters& params,
                              const ModelConfig& config) {
  const SurvivalPredictor predictor(params, config);
  const Vector& times = data.event_times();
  const std::span<const double> grid(times.data(), static_cast<std::size_t>(times.size()));
  const SurvivalCurve km = kaplan_meier(data);

  GoodnessOfFit out;
  out.times = times;
  out.kaplan_meier.resize(times.size());
  out.by_class.resize(times.size(), params.num_classes());
  out.overall = predictor.survival(data.covariates(), grid).colwise().mean().transpose();
  for (Index j = 0; j < times.size(); ++j) {
    out.kaplan_meier[j] = km(times[j]);
    out.by_class.row(j) = predictor.class_survival(data.covariates(), times[j]).colwise().mean();
  }
  return out;
}

}  // namespace lcph
