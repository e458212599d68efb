#include "helpers.hpp"

#include <algorithm>

using namespace lcph;
using doctest::Approx;

TEST_SUITE("simulation") {

TEST_CASE("median event time at zero linear predictor") {
  CHECK(event_time_from_uniform(0.5, 0.0) == Approx(2.070838618122546).epsilon(1e-14));
  CHECK(true_cumulative_hazard(event_time_from_uniform(0.5, 0.0)) == Approx(std::log(2.0)));
}

TEST_CASE("event-time draws follow the target distribution") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double eta : {-2.0, 0.0, 1.5}) {
    const std::size_t n = 5000;
    std::vector<double> t(n);
    for (auto& v : t) v = event_time_from_uniform(1.0 - u(rng), eta);
    std::sort(t.begin(), t.end());
    double d = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double cdf = -std::expm1(-std::exp(eta) * true_cumulative_hazard(t[k]));
      d = std::max({d, std::abs(cdf - static_cast<double>(k) / n),
                    std::abs(cdf - static_cast<double>(k + 1) / n)});
    }
    CHECK(d < 1.63 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("latent class frequencies") {
  const SimulatedData one = generate(ScenarioSpec::table("I", 20000, 3));
  const double second =
      static_cast<double>(std::count(one.labels.begin(), one.labels.end(), 1)) / 20000.0;
  CHECK(std::abs(second - 2.0 / 3.0) < 0.015);

  const SimulatedData four = generate(ScenarioSpec::table("IV", 20000, 4));
  const double second_iv =
      static_cast<double>(std::count(four.labels.begin(), four.labels.end(), 1)) / 20000.0;
  CHECK(std::abs(second_iv - 0.5) < 0.015);

  const SimulatedData five = generate(ScenarioSpec::table("V", 3000, 5));
  for (int l = 0; l < 3; ++l) CHECK(std::count(five.labels.begin(), five.labels.end(), l) > 600);
}

TEST_CASE("censoring proportions") {
  auto censored = [](const std::string& id) {
    const SimulatedData sim = generate(ScenarioSpec::table(id, 20000, 6));
    return 1.0 - static_cast<double>(sim.data.num_events()) / 20000.0;
  };
  const double first = censored("I");
  CHECK(first > 0.09);
  CHECK(first < 0.13);
  CHECK(censored("III") > first + 0.1);
}

TEST_CASE("scenario table") {
  for (const auto& id : ScenarioSpec::table_ids()) {
    const ScenarioSpec s = ScenarioSpec::table(id, 100, 1);
    CHECK_NOTHROW(s.validate());
    CHECK(s.alpha.rows() == s.num_classes - 1);
    CHECK(s.alpha.cols() == 3);
    CHECK(s.true_theta().size() == s.model_config().num_params());
  }
  CHECK(ScenarioSpec::table("V").num_classes == 3);
  CHECK_THROWS_AS(ScenarioSpec::table("VI"), InputError);
  ScenarioSpec bad = ScenarioSpec::table("I");
  bad.gamma.resize(3);
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("generation is seeded") {
  const SimulatedData a = generate(ScenarioSpec::table("II", 200, 8));
  const SimulatedData b = generate(ScenarioSpec::table("II", 200, 8));
  const SimulatedData c = generate(ScenarioSpec::table("II", 200, 9));
  CHECK(a.data.times() == b.data.times());
  CHECK(a.labels == b.labels);
  CHECK(a.data.times() != c.data.times());
  CHECK(replicate_seed(1, 0) != replicate_seed(1, 1));
  CHECK(replicate_seed(1, 0) != replicate_seed(2, 0));
}

TEST_CASE("replicate study is reproducible and thread-count independent") {
  StudyOptions opts;
  opts.replicates = 4;
  opts.seed = 5;
  opts.standard_errors = false;
  const ScenarioSpec spec = ScenarioSpec::table("I", 300);
  const ReplicateSummary a = run_replicates(spec, opts);
  opts.threads = 2;
  const ReplicateSummary b = run_replicates(spec, opts);
  REQUIRE(a.estimates.size() == 4);
  for (std::size_t r = 0; r < 4; ++r) CHECK(a.estimates[r] == b.estimates[r]);
  CHECK(a.parameters.size() == 8);
  CHECK(a.max_loglik_drop <= 1e-8);
  CHECK(std::isnan(a.parameters[0].median_see));
}

TEST_CASE("single-replicate selection study is one-hot") {
  StudyOptions opts;
  opts.replicates = 1;
  opts.init = InitMode::kmeans;
  opts.restarts = 1;
  const std::vector<int> candidates{1, 2};
  const SelectionStudy study = run_selection_study(ScenarioSpec::table("I", 300), candidates, opts);
  REQUIRE(study.counts.size() == 4);
  for (const auto& row : study.counts) {
    CHECK(row.size() == 2);
    CHECK(row[0] + row[1] == 1);
  }
}

TEST_CASE("regular grid") {
  const auto g = regular_grid(1.0, 0.25);
  CHECK(g == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  CHECK(regular_grid(5.75).size() == 23);
  CHECK_THROWS_AS(regular_grid(1.0, 0.0), InputError);
}

TEST_CASE("cohort-like data") {
  const SimulatedData sim = generate_cohort_like(3000, 2);
  CHECK(sim.data.num_covariates() == 14);
  const double censored = 1.0 - static_cast<double>(sim.data.num_events()) / 3000.0;
  CHECK(std::abs(censored - 0.72) < 0.03);
}

}
