#pragma once

#include <doctest.h>

#include <random>

#include "lcph/em.hpp"
#include "lcph/simulation.hpp"
#include "oracles.hpp"

namespace testing {

using namespace lcph;

inline Dataset make_data(std::initializer_list<double> times, std::initializer_list<int> status,
                         const Matrix& x) {
  Vector t(static_cast<Index>(times.size()));
  IntVector s(static_cast<Index>(status.size()));
  Index k = 0;
  for (double v : times) t[k++] = v;
  k = 0;
  for (int v : status) s[k++] = v;
  return Dataset(t, s, x);
}

// Random Cox data: x1 ~ Bernoulli(0.5), x2 ~ U(0, 1), exponential event
// times with rate exp(x'beta), uniform censoring.
inline Dataset random_cox_data(Index n, const Vector& beta, std::uint64_t seed,
                               double censor_max = 3.0) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix x(n, 2);
  Vector t(n);
  IntVector s(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = coin(rng) ? 1.0 : 0.0;
    x(i, 1) = unif(rng);
    const double event = -std::log(1.0 - unif(rng)) / std::exp(x.row(i).dot(beta));
    const double censor = censor_max * unif(rng);
    t[i] = std::min(event, censor);
    s[i] = event <= censor ? 1 : 0;
  }
  return Dataset(t, s, x);
}

inline ModelConfig config_for(const Dataset& data, int classes) {
  return ModelConfig::with_all_covariates(data, classes);
}

// Every fit in the suite goes through here so that monotonicity is checked.
inline void require_monotone(const EmState& state) {
  for (std::size_t k = 1; k < state.loglik_history.size(); ++k)
    REQUIRE(state.loglik_history[k] >= state.loglik_history[k - 1] - 1e-8);
}

inline EmState checked_fit(const Dataset& data, const ModelConfig& config) {
  EmState state = fit(data, config);
  require_monotone(state);
  return state;
}

inline EmState checked_fit(const Dataset& data, const ModelConfig& config, const PosteriorWeights& w) {
  EmState state = fit_from_weights(data, config, w);
  require_monotone(state);
  return state;
}

}  // namespace testing
