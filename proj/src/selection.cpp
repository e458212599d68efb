#include "lcph/selection.hpp"

#include <algorithm>
#include <cmath>

#include "lcph/parallel.hpp"

namespace lcph {

double classification_entropy(const PosteriorWeights& weights) {
  double total = 0.0;
  for (Index i = 0; i < weights.rows(); ++i)
    for (Index l = 0; l < weights.cols(); ++l) {
      const double w = weights(i, l);
      if (w > 0.0) total -= w * std::log(w);
    }
  return total;
}

double entropy_index(const PosteriorWeights& weights) {
  if (weights.cols() <= 1) return 1.0;
  const double n = static_cast<double>(weights.rows());
  const double value =
      1.0 - classification_entropy(weights) / (n * std::log(static_cast<double>(weights.cols())));
  return std::clamp(value, 0.0, 1.0);
}

CriteriaReport criteria(const EmState& fit, const Dataset& data, const ModelConfig& config) {
  CriteriaReport report;
  report.num_classes = config.num_classes;
  report.loglik = fit.loglik();
  report.num_params = config.num_params();
  const double r = static_cast<double>(report.num_params);
  const double n = static_cast<double>(data.size());
  report.aic = -2.0 * report.loglik + 2.0 * r;
  report.bic = -2.0 * report.loglik + r * std::log(n);
  report.entropy = classification_entropy(fit.weights);
  report.icl_bic = report.bic + 2.0 * report.entropy;
  report.entropy_index = entropy_index(fit.weights);
  report.converged = fit.converged;
  return report;
}

const char* criterion_name(Criterion c) {
  switch (c) {
    case Criterion::aic: return "AIC";
    case Criterion::bic: return "BIC";
    case Criterion::icl_bic: return "ICL-BIC";
    case Criterion::entropy_index: return "entropy";
  }
  return "?";
}

int best_num_classes(std::span<const CriteriaReport> table, Criterion criterion) {
  std::vector<CriteriaReport> sorted(table.begin(), table.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const CriteriaReport& a, const CriteriaReport& b) { return a.num_classes < b.num_classes; });
  auto score = [&](const CriteriaReport& r) {
    switch (criterion) {
      case Criterion::aic: return r.aic;
      case Criterion::bic: return r.bic;
      case Criterion::icl_bic: return r.icl_bic;
      case Criterion::entropy_index: return -r.entropy_index;
    }
    return r.bic;
  };
  int best = 0;
  double best_score = 0.0;
  for (const CriteriaReport& r : sorted) {
    const double s = score(r);
    if (best == 0 || s < best_score) {
      best = r.num_classes;
      best_score = s;
    }
  }
  return best;
}

SelectionResult select_num_classes(const Dataset& data, const ModelConfig& base,
                                   std::span<const int> candidates,
                                   const SelectionOptions& options) {
  if (candidates.empty()) throw InputError("select_num_classes: no candidate class counts");
  std::vector<int> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<std::optional<CriteriaReport>> reports(sorted.size());
  std::vector<std::string> errors(sorted.size());
  parallel_for(sorted.size(), options.threads, [&](std::size_t k) {
    ModelConfig config = base;
    config.num_classes = sorted[k];
    config.initialization = Initialization::kmeans;
    try {
      const EmState state = fit_with_restarts(data, config, options.restarts);
      reports[k] = criteria(state, data, config);
    } catch (const NumericalError& e) {
      errors[k] = e.what();
    }
  });

  SelectionResult result;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (reports[k])
      result.table.push_back(*reports[k]);
    else
      result.failed.emplace_back(sorted[k], errors[k]);
  }
  return result;
}

}  // namespace lcph
