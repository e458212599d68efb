#include "helpers.hpp"

#include <sstream>

#include "lcph/io.hpp"

using namespace lcph;
using doctest::Approx;

namespace {

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    read_csv(in, "data.csv");
  } catch (const InputError& e) {
    return e.what();
  }
  return {};
}

const std::string kToy = std::string(LCPH_TEST_DATA_DIR) + "/toy50.csv";

}  // namespace

TEST_SUITE("io") {

TEST_CASE("CSV reading") {
  std::istringstream in("time,status,age,sex\n1.5,1,40,0\n2.5,0,51.5,1\n0.5,1,33,1\n");
  const Dataset d = read_csv(in);
  CHECK(d.size() == 3);
  CHECK(d.covariate_names() == std::vector<std::string>{"age", "sex"});
  CHECK(d.covariates()(1, 0) == 51.5);
  CHECK(d.status()[1] == 0);
  CHECK(d.num_events() == 2);
}

TEST_CASE("CSV errors name the line") {
  CHECK(error_of("").find("empty input") != std::string::npos);
  CHECK(error_of("time,status,x\n").find("no data rows") != std::string::npos);
  CHECK(error_of("time,status,x\n1,1,0\n2,x,1\n").find("data.csv:3") != std::string::npos);
  CHECK(error_of("time,status,x\n1,1,0\n2,1\n").find("data.csv:3") != std::string::npos);
  CHECK(error_of("time,status,x\n1,1,0\n-2,1,1\n").find("data.csv:3") != std::string::npos);
  CHECK(error_of("time,status,x\n1,2,0\n").find("data.csv:2") != std::string::npos);
  CHECK_FALSE(error_of("stime,status,x\n1,1,0\n").empty());
  CHECK_THROWS_AS(read_csv_file("/nonexistent/file.csv"), InputError);
}

TEST_CASE("CSV write and read round-trip") {
  const SimulatedData sim = generate(ScenarioSpec::table("I", 50, 4));
  std::stringstream buf;
  write_csv(buf, sim.data);
  const Dataset back = read_csv(buf);
  CHECK(back.times() == sim.data.times());
  CHECK(back.status() == sim.data.status());
  CHECK(back.covariates() == sim.data.covariates());
}

TEST_CASE("covariate table drops outcome columns") {
  std::istringstream in("time,status,x1,x2\n1,1,0,0.5\n2,0,1,0.25\n");
  const CovariateTable t = read_covariate_csv(in);
  CHECK(t.names == std::vector<std::string>{"x1", "x2"});
  CHECK(t.values.cols() == 2);
  CHECK(t.values(1, 1) == 0.25);
}

TEST_CASE("standardization") {
  const SimulatedData sim = generate(ScenarioSpec::table("I", 200, 5));
  Standardization info;
  const Dataset z = standardize(sim.data, &info);
  for (Index k = 0; k < 2; ++k) {
    const Vector col = z.covariates().col(k);
    CHECK(std::abs(col.mean()) < 1e-12);
    const double var = (col.array() - col.mean()).square().sum() / static_cast<double>(col.size() - 1);
    CHECK(var == Approx(1.0).epsilon(1e-12));
  }
  CHECK(info.mean.size() == 2);
}

TEST_CASE("fit report JSON round-trip re-scores the same likelihood") {
  const SimulatedData sim = generate(ScenarioSpec::table("I", 200, 6));
  const ModelConfig config = ScenarioSpec::table("I").model_config();
  const EmState state = testing::checked_fit(sim.data, config, label_weights(sim.labels, 2));
  FitReport report;
  report.timestamp = utc_timestamp();
  report.seed = 6;
  report.config = config;
  report.covariate_names = sim.data.covariate_names();
  report.n = sim.data.size();
  report.params = state.params;
  report.loglik_history = state.loglik_history;
  report.converged = state.converged;
  report.iterations = state.iteration;
  report.criteria = criteria(state, sim.data, config);
  const CovarianceResult cov = covariance(sim.data, state, config);
  report.standard_errors = cov.standard_errors();
  report.intervals = wald_intervals(cov, 0.95);

  const nlohmann::json j = nlohmann::json::parse(to_json(report).dump());
  CHECK(j.at("schema_version") == kResultSchemaVersion);
  CHECK(j.at("estimates").size() == 8);
  CHECK(j.at("estimates")[0].at("name") == "alpha[2].intercept");

  const FitReport back = fit_report_from_json(j);
  CHECK(back.config.num_classes == 2);
  CHECK(back.config.survival_covariates == config.survival_covariates);
  CHECK(back.params.gamma == state.params.gamma);
  CHECK(back.params.alpha == state.params.alpha);
  CHECK(back.standard_errors == report.standard_errors);
  CHECK(std::abs(mixture_loglik(sim.data, back.params, back.config) - state.loglik()) < 1e-9);
}

TEST_CASE("scenario JSON") {
  const ScenarioSpec s = scenario_from_json(nlohmann::json::parse(R"({"id": "IV"})"));
  CHECK(s.alpha == ScenarioSpec::table("IV").alpha);
  const ScenarioSpec custom = scenario_from_json(nlohmann::json::parse(
      R"({"id": "mine", "num_classes": 2, "censoring_rate": 0.2,
          "alpha": [[0.5, 0.0, 0.0]], "gamma": [1, 0, 1, 0, 0], "n": 40})"));
  CHECK(custom.n == 40);
  CHECK(custom.censoring_rate == 0.2);
  CHECK_THROWS_AS(scenario_from_json(nlohmann::json::parse(
                      R"({"id": "bad", "num_classes": 2, "censoring_rate": 0.2,
                          "alpha": [[0.5, 0.0, 0.0]], "gamma": [1, 0]})")),
                  InputError);
}

TEST_CASE("single-class fit on the toy data matches an external Cox fit") {
  const Dataset data = read_csv_file(kToy);
  REQUIRE(data.size() == 50);
  REQUIRE(data.num_event_times() == 44);
  ModelConfig config = testing::config_for(data, 1);
  config.tolerance = 1e-13;
  config.max_iterations = 100000;
  const EmState state = testing::checked_fit(data, config);

  // statsmodels PHReg, Breslow ties
  CHECK(state.params.gamma[0] == Approx(-1.0032289821476763).epsilon(1e-6));
  CHECK(state.params.gamma[1] == Approx(0.9722764619644493).epsilon(1e-6));
  CHECK(state.loglik() == Approx(-130.87471663397048 - 44.0).epsilon(1e-9));
  const Baseline& cum = state.params.baseline;
  CHECK(cum(0.0011) == Approx(0.01965076172810903).epsilon(1e-6));
  CHECK(cum(0.0092) == Approx(0.03992480373719132).epsilon(1e-6));
  CHECK(cum(0.0147) == Approx(0.06114251624651545).epsilon(1e-6));
  CHECK(cum(0.0366) == Approx(0.08269264047859065).epsilon(1e-6));

  // and against the in-tree oracles
  const auto beta = oracle::nested_golden_max(
      [&](const oracle::Vec& b) {
        return oracle::cox_partial_loglik(data.times(), data.status(), data.covariates(), b);
      },
      2);
  CHECK(std::abs(beta[0] - state.params.gamma[0]) < 1e-6);
  CHECK(std::abs(beta[1] - state.params.gamma[1]) < 1e-6);
  const oracle::Breslow naive = oracle::naive_breslow(data.times(), data.status(),
                                                      data.covariates(), state.params.gamma);
  REQUIRE(naive.cumulative.size() == 44);
  for (Index j = 0; j < 44; ++j)
    CHECK(std::abs(naive.cumulative[static_cast<std::size_t>(j)] - cum.cumulative()[j]) < 1e-10);
}

}
