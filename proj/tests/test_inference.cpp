#include "helpers.hpp"

#include "lcph/inference.hpp"

using namespace lcph;
using doctest::Approx;

TEST_SUITE("inference") {

TEST_CASE("profile log-likelihood at the estimate reproduces the fit") {
  const SimulatedData sim = generate(ScenarioSpec::table("I", 400, 21));
  ModelConfig config = ScenarioSpec::table("I").model_config();
  config.tolerance = 1e-11;
  const EmState state = testing::checked_fit(sim.data, config, label_weights(sim.labels, 2));
  const Vector pl = profile_loglik_at(sim.data, pack_theta(state.params), config, state, {1e-11, 10000});
  CHECK(std::abs(pl.sum() - state.loglik()) < 1e-8);
}

TEST_CASE("profile log-likelihood is largest at the estimate") {
  const SimulatedData sim = generate(ScenarioSpec::table("I", 400, 22));
  const ModelConfig config = ScenarioSpec::table("I").model_config();
  const EmState state = testing::checked_fit(sim.data, config, label_weights(sim.labels, 2));
  const Vector theta = pack_theta(state.params);
  const double at_hat = profile_loglik_at(sim.data, theta, config, state).sum();
  const double h = profile_step(sim.data.size());
  for (Index k = 0; k < theta.size(); ++k)
    for (double sign : {-1.0, 1.0}) {
      Vector moved = theta;
      moved[k] += sign * h;
      CHECK(profile_loglik_at(sim.data, moved, config, state).sum() <= at_hat + 1e-6);
    }
}

TEST_CASE("finite-difference step") {
  CHECK(profile_step(1000) == Approx(0.158113883).epsilon(1e-9));
}

TEST_CASE("no finite-dimensional parameters gives an empty covariance") {
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> e(1.0);
  Vector t(30);
  for (auto& v : t) v = e(rng);
  const Dataset data(t, IntVector::Ones(30), Matrix::Zero(30, 0));
  const ModelConfig config = testing::config_for(data, 1);
  const EmState state = testing::checked_fit(data, config);
  const CovarianceResult cov = covariance(data, state, config);
  CHECK(cov.covariance.size() == 0);
  CHECK(cov.theta_hat.size() == 0);
}

TEST_CASE("covariance is symmetric positive definite on scenario I data") {
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    const SimulatedData sim = generate(ScenarioSpec::table("I", 500, seed));
    const ModelConfig config = ScenarioSpec::table("I").model_config();
    const EmState state = testing::checked_fit(sim.data, config, label_weights(sim.labels, 2));
    const CovarianceResult cov = covariance(sim.data, state, config);
    CHECK((cov.covariance - cov.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(cov.covariance.llt().info() == Eigen::Success);
    CHECK((cov.standard_errors().array() > 0.0).all());
  }
}

TEST_CASE("single-class standard errors agree with the partial-likelihood information") {
  for (std::uint64_t seed : {41u, 42u}) {
    const Dataset data = testing::random_cox_data(500, (Vector(2) << 0.7, -1.0).finished(), seed);
    const ModelConfig config = testing::config_for(data, 1);
    const EmState state = testing::checked_fit(data, config);
    const CovarianceResult cov = covariance(data, state, config);
    const oracle::Mat hess = oracle::numeric_hessian(
        [&](const oracle::Vec& b) {
          return oracle::cox_partial_loglik(data.times(), data.status(), data.covariates(), b);
        },
        state.params.gamma);
    const oracle::Vec se = (-hess).inverse().diagonal().cwiseSqrt();
    for (Index k = 0; k < 2; ++k) CHECK(std::abs(cov.standard_errors()[k] / se[k] - 1.0) < 0.10);
  }
}

TEST_CASE("normal quantiles and Wald intervals") {
  CHECK(normal_quantile(0.975) == Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.75) == Approx(0.674489750196082).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == Approx(0.0).scale(1.0).epsilon(1e-14));
  CHECK(normal_quantile(1e-10) == Approx(-6.361340902404056).epsilon(1e-10));

  const auto a = wald_intervals(Vector::Zero(1), Vector::Ones(1), 0.95);
  CHECK(a[0].lower == Approx(-1.95996).epsilon(1e-5));
  CHECK(a[0].upper == Approx(1.95996).epsilon(1e-5));
  const auto b = wald_intervals(Vector::Constant(1, 2.0), Vector::Constant(1, 2.0), 0.5);
  CHECK(b[0].lower == Approx(2.0 - 2.0 * 0.67449).epsilon(1e-5));
  CHECK(b[0].upper == Approx(2.0 + 2.0 * 0.67449).epsilon(1e-5));
  const auto c = wald_intervals(Vector::Constant(1, 3.0), Vector::Zero(1), 0.9);
  CHECK(c[0].lower == 3.0);
  CHECK(c[0].upper == 3.0);
  CHECK_THROWS_AS(wald_intervals(Vector::Zero(1), Vector::Ones(1), 1.0), InputError);
}

TEST_CASE("median, MAD and the non-convergence screen") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(median_absolute_deviation({1, 1, 1, 1, 100}) == 0.0);

  const Vector truth = Vector::Zero(1);
  std::vector<Vector> same(5, Vector::Constant(1, 0.3));
  for (bool f : nonconvergence_flags(same, truth)) CHECK_FALSE(f);

  std::vector<Vector> spread;
  for (double v : {1.0, 1.0, 1.0, 1.0, 100.0}) spread.push_back(Vector::Constant(1, v));
  CHECK(nonconvergence_flags(spread, truth) == std::vector<bool>{false, false, false, false, true});
}

}
