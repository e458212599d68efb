#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcph/em.hpp"

namespace lcph {

struct CriteriaReport {
  int num_classes = 1;
  double loglik = 0.0;
  Index num_params = 0;
  double aic = 0.0;
  double bic = 0.0;
  double icl_bic = 0.0;
  /// sum_i sum_l -w_il log w_il
  double entropy = 0.0;
  /// 1 - entropy / (n log L); 1 when L = 1.
  double entropy_index = 1.0;
  bool converged = false;
};

double classification_entropy(const PosteriorWeights& weights);
double entropy_index(const PosteriorWeights& weights);

CriteriaReport criteria(const EmState& fit, const Dataset& data, const ModelConfig& config);

enum class Criterion { aic, bic, icl_bic, entropy_index };

const char* criterion_name(Criterion c);

/// L minimising the criterion (maximising for the entropy index); ties go to
/// the smaller L. Returns 0 for an empty table.
int best_num_classes(std::span<const CriteriaReport> table, Criterion criterion);

struct SelectionOptions {
  /// Fits per candidate L; the first is k-means initialised, the rest random.
  int restarts = 1;
  unsigned threads = 1;
};

struct SelectionResult {
  /// One report per successfully fitted L, in increasing L.
  std::vector<CriteriaReport> table;
  /// Candidates whose fits all failed, with the error message.
  std::vector<std::pair<int, std::string>> failed;

  int best(Criterion criterion) const { return best_num_classes(table, criterion); }
};

/// Fits every L in `candidates` with k-means initialisation and tabulates the
/// criteria. `base` supplies covariates, tolerance and seed.
SelectionResult select_num_classes(const Dataset& data, const ModelConfig& base,
                                   std::span<const int> candidates,
                                   const SelectionOptions& options = {});

}  // namespace lcph
