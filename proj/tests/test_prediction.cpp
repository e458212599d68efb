#include "helpers.hpp"

#include "lcph/prediction.hpp"

using namespace lcph;
using doctest::Approx;

namespace {

Parameters two_class_params(const Dataset& data) {
  Parameters p;
  p.alpha = (Matrix(1, 3) << 0.4, -0.8, 0.5).finished();
  p.gamma = (Vector(5) << -1.0, 0.3, 1.5, 0.7, -0.2).finished();
  Vector jumps = Vector::Constant(data.num_event_times(), 0.05);
  p.baseline = Baseline(data.event_times(), jumps);
  return p;
}

}  // namespace

TEST_SUITE("prediction") {

TEST_CASE("predicted survival at time zero is one") {
  const Dataset data = testing::random_cox_data(40, Vector::Zero(2), 1);
  const ModelConfig config = testing::config_for(data, 2);
  const Parameters p = two_class_params(data);
  for (Index i = 0; i < data.size(); ++i)
    CHECK(predicted_survival(data.covariates().row(i).transpose(), 0.0, p, config) == 1.0);
  CHECK_THROWS_AS(predicted_survival(Vector::Zero(2), -1.0, p, config), InputError);
}

TEST_CASE("single-class prediction is the Cox survival curve") {
  const Dataset data = testing::random_cox_data(40, Vector::Zero(2), 2);
  const ModelConfig config = testing::config_for(data, 1);
  Parameters p;
  p.alpha = Matrix(0, 3);
  p.gamma = (Vector(2) << 0.6, -0.4).finished();
  p.baseline = Baseline(data.event_times(), Vector::Constant(data.num_event_times(), 0.03));
  const Vector x = (Vector(2) << 1.0, 0.3).finished();
  const double t = data.event_times()[5];
  CHECK(predicted_survival(x, t, p, config) ==
        Approx(std::exp(-0.18 * std::exp(0.6 - 0.12))).epsilon(1e-14));
}

TEST_CASE("two-class prediction is a weighted sum of class curves") {
  const Dataset data = testing::random_cox_data(40, Vector::Zero(2), 3);
  const ModelConfig config = testing::config_for(data, 2);
  const Parameters p = two_class_params(data);
  const Vector x = (Vector(2) << 1.0, 0.25).finished();
  const double t = 0.5 * (data.event_times()[9] + data.event_times()[10]);
  const double cum = 0.05 * 10;
  const double e2 = std::exp(0.4 - 0.8 * 1.0 + 0.5 * 0.25);
  const double p1 = 1.0 / (1.0 + e2), p2 = e2 / (1.0 + e2);
  const double eta1 = -1.0 * 1.0 + 0.3 * 0.25;
  const double eta2 = eta1 + 1.5 + 0.7 * 1.0 - 0.2 * 0.25;
  const double expected = p1 * std::exp(-cum * std::exp(eta1)) + p2 * std::exp(-cum * std::exp(eta2));
  CHECK(predicted_survival(x, t, p, config) == Approx(expected).epsilon(1e-14));
}

TEST_CASE("predicted survival is nonincreasing in time") {
  const Dataset data = testing::random_cox_data(60, Vector::Zero(2), 4);
  const ModelConfig config = testing::config_for(data, 2);
  const SurvivalPredictor predictor(two_class_params(data), config);
  std::vector<double> grid;
  for (double t = 0.0; t <= 3.0; t += 0.01) grid.push_back(t);
  const Matrix s = predictor.survival(data.covariates(), grid);
  for (Index i = 0; i < s.rows(); ++i)
    for (Index g = 1; g < s.cols(); ++g) CHECK(s(i, g) <= s(i, g - 1));
  CHECK((s.array() >= 0.0).all());
  CHECK((s.array() <= 1.0).all());
}

TEST_CASE("Kaplan-Meier hand values") {
  SUBCASE("no censoring") {
    const std::vector<double> t{1, 2, 3};
    const std::vector<int> d{1, 1, 1};
    const SurvivalCurve km = kaplan_meier(t, d);
    CHECK(km(1.0) == Approx(2.0 / 3));
    CHECK(km(2.0) == Approx(1.0 / 3));
    CHECK(km(3.0) == 0.0);
    CHECK(km(0.5) == 1.0);
    CHECK(km.left_limit(2.0) == Approx(2.0 / 3));
  }
  SUBCASE("all censored") {
    const std::vector<double> t{1, 2, 3};
    const std::vector<int> d{0, 0, 0};
    const SurvivalCurve km = kaplan_meier(t, d);
    CHECK(km(0.0) == 1.0);
    CHECK(km(10.0) == 1.0);
    const SurvivalCurve g = kaplan_meier(t, d, KaplanMeierTarget::censoring);
    CHECK(g(3.0) == 0.0);
  }
  SUBCASE("censoring inside") {
    const std::vector<double> t{1, 2, 3};
    const std::vector<int> d{0, 1, 0};
    CHECK(kaplan_meier(t, d)(2.0) == Approx(0.5));
  }
  SUBCASE("uncensored data gives the empirical survival function") {
    std::mt19937_64 rng(6);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> t(50);
    for (auto& v : t) v = e(rng);
    const std::vector<int> d(50, 1);
    const SurvivalCurve km = kaplan_meier(t, d);
    for (double s : t) {
      const auto above = std::count_if(t.begin(), t.end(), [s](double v) { return v > s; });
      CHECK(km(s) == Approx(static_cast<double>(above) / 50.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("Brier scores on uncensored data") {
  const Dataset data = testing::make_data({1, 2, 3, 4}, {1, 1, 1, 1}, Matrix::Zero(4, 1));
  const std::vector<double> grid{0.5, 1.5, 2.5, 3.5};
  const SurvivalCurve g = kaplan_meier(data, KaplanMeierTarget::censoring);

  SUBCASE("perfect predictor") {
    Matrix s(4, 4);
    for (Index i = 0; i < 4; ++i)
      for (Index k = 0; k < 4; ++k) s(i, k) = data.times()[i] > grid[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
    const BrierCurve b = brier_scores(data, s, Vector::Zero(4), g, grid);
    CHECK(b.bs1.isZero());
    CHECK(b.bs2.isZero());
  }
  SUBCASE("constant one half") {
    const BrierCurve b = brier_scores(data, Matrix::Constant(4, 4, 0.5), Vector::Constant(4, 0.5), g, grid);
    for (Index k = 0; k < 4; ++k) {
      CHECK(b.bs1[k] == Approx(0.25));
      CHECK(b.bs2[k] == Approx(0.25));
    }
  }
  SUBCASE("both estimators agree for any predictor") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix s(4, 4);
    for (auto& v : s.reshaped()) v = u(rng);
    const BrierCurve b = brier_scores(data, s, Vector::Constant(4, 0.5), g, grid);
    CHECK((b.bs1 - b.bs2).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("Brier scores on a four-subject fixture with one censoring") {
  const Dataset data = testing::make_data({1, 2, 3, 4}, {1, 0, 1, 1}, Matrix::Zero(4, 1));
  const SurvivalCurve g = kaplan_meier(data, KaplanMeierTarget::censoring);
  CHECK(g(2.5) == Approx(2.0 / 3));
  const std::vector<double> grid{2.5};
  const Matrix s = (Matrix(4, 1) << 0.6, 0.5, 0.7, 0.8).finished();
  const Vector own = (Vector(4) << 0.9, 0.8, 0.75, 0.6).finished();
  const BrierCurve b = brier_scores(data, s, own, g, grid);
  // event at 1 weighted by G(1-) = 1; subjects 3 and 4 still at risk, weight G(2.5) = 2/3
  const double bs1 = (0.6 * 0.6 / 1.0 + 0.3 * 0.3 / (2.0 / 3) + 0.2 * 0.2 / (2.0 / 3)) / 4.0;
  // censored subject: ratio 0.5 / 0.8 splits between alive and dead residuals
  const double ratio = 0.5 / 0.8;
  const double bs2 = (0.36 + 0.25 * ratio + 0.25 * (1.0 - ratio) + 0.09 + 0.04) / 4.0;
  CHECK(b.bs1[0] == Approx(bs1).epsilon(1e-14));
  CHECK(b.bs2[0] == Approx(bs2).epsilon(1e-14));
}

TEST_CASE("Brier score is missing where the censoring survival vanishes") {
  const Dataset data = testing::make_data({1, 2, 3}, {1, 1, 0}, Matrix::Zero(3, 1));
  const SurvivalCurve g = kaplan_meier(data, KaplanMeierTarget::censoring);
  const std::vector<double> grid{1.5, 3.5};
  const BrierCurve b = brier_scores(data, Matrix::Constant(3, 2, 0.5), Vector::Constant(3, 0.5), g, grid);
  CHECK(std::isfinite(b.bs1[0]));
  CHECK(std::isnan(b.bs1[1]));
  CHECK(std::isnan(b.bs2[1]));
}

TEST_CASE("folds are stratified by status") {
  const SimulatedData sim = generate(ScenarioSpec::table("III", 500, 9));
  const std::vector<int> folds = stratified_folds(sim.data, 5, 3);
  std::vector<int> events(5, 0), total(5, 0);
  for (Index i = 0; i < sim.data.size(); ++i) {
    ++total[static_cast<std::size_t>(folds[static_cast<std::size_t>(i)])];
    events[static_cast<std::size_t>(folds[static_cast<std::size_t>(i)])] += sim.data.status()[i];
  }
  const auto [lo, hi] = std::minmax_element(events.begin(), events.end());
  CHECK(*hi - *lo <= 1);
  for (int t : total) CHECK(std::abs(t - 100) <= 1);
  CHECK(stratified_folds(sim.data, 5, 3) == folds);
}

TEST_CASE("cross-validated Brier curves are reproducible") {
  const ScenarioSpec spec = ScenarioSpec::table("IV", 300, 10);
  const SimulatedData sim = generate(spec);
  ModelConfig cox = spec.model_config();
  cox.num_classes = 1;
  cox.membership_covariates.clear();
  const std::vector<double> grid = regular_grid(5.0, 0.5);
  CrossValidationOptions opts;
  opts.seed = 17;
  const CrossValidatedBrier a = cross_validated_brier(sim.data, spec.model_config(), cox, grid, opts);
  const CrossValidatedBrier b = cross_validated_brier(sim.data, spec.model_config(), cox, grid, opts);
  CHECK(a.model.bs1.cwiseEqual(b.model.bs1).all());
  CHECK(a.comparator.bs2.cwiseEqual(b.comparator.bs2).all());
  CHECK(a.model.folds == 5);
  CHECK(a.censoring_source == "test fold");

  const CrossValidatedBrier same = cross_validated_brier(sim.data, cox, cox, grid, opts);
  CHECK(same.model.bs1.cwiseEqual(same.comparator.bs1).all());
}

TEST_CASE("goodness of fit overlays Kaplan-Meier and the model curve") {
  const ScenarioSpec spec = ScenarioSpec::table("I", 400, 12);
  const SimulatedData sim = generate(spec);
  const EmState state = testing::checked_fit(sim.data, spec.model_config(), label_weights(sim.labels, 2));
  const GoodnessOfFit gof = goodness_of_fit(sim.data, state.params, spec.model_config());
  CHECK(gof.times.size() == sim.data.num_event_times());
  CHECK(gof.by_class.cols() == 2);
  CHECK((gof.kaplan_meier - gof.overall).cwiseAbs().maxCoeff() < 0.05);
}

}
