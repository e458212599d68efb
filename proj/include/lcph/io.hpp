#pragma once

// CSV ingestion, JSON result files and CSV summary tables.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lcph/inference.hpp"
#include "lcph/prediction.hpp"
#include "lcph/selection.hpp"
#include "lcph/simulation.hpp"

namespace lcph {

/// Header row "time,status,<covariates...>" then one subject per line.
/// Errors carry the 1-based line number.
Dataset read_csv(std::istream& in, const std::string& source = "<input>");
Dataset read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const Dataset& data);

/// Covariate-only table for prediction; "time" and "status" columns, if
/// present, are dropped.
struct CovariateTable {
  std::vector<std::string> names;
  Matrix values;
};
CovariateTable read_covariate_csv(std::istream& in, const std::string& source = "<input>");

/// Column-wise z-scores. Constant columns are only centred.
struct Standardization {
  Vector mean;
  Vector sd;
};
Dataset standardize(const Dataset& data, Standardization* info = nullptr);

inline constexpr int kResultSchemaVersion = 1;

/// Everything persisted by a fit.
struct FitReport {
  int schema_version = kResultSchemaVersion;
  std::string timestamp;
  std::uint64_t seed = 0;
  std::string input;
  ModelConfig config;
  std::vector<std::string> covariate_names;
  Index n = 0;
  Parameters params;
  std::vector<double> loglik_history;
  bool converged = false;
  int iterations = 0;
  double max_loglik_drop = 0.0;
  CriteriaReport criteria;
  /// Empty when the covariance step was skipped or failed.
  Vector standard_errors;
  std::vector<Interval> intervals;
  std::string covariance_error;
  bool standardized = false;
  /// Column means and SDs applied to the input when standardized.
  Standardization standardization;

  double loglik() const { return loglik_history.empty() ? 0.0 : loglik_history.back(); }
};

nlohmann::json to_json(const FitReport& report);
FitReport fit_report_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

/// Scenario from a JSON object with keys id, num_classes, censoring_rate,
/// alpha (rows), gamma, and optional n, seed, horizon. A bare {"id": "I"}
/// takes the built-in values.
ScenarioSpec scenario_from_json(const nlohmann::json& j);

/// Current UTC time as ISO 8601.
std::string utc_timestamp();

void write_criteria_csv(std::ostream& out, std::span<const CriteriaReport> table);
/// One row per parameter: scenario, n, parameter, truth, median_bias, se, see, cp.
void write_estimation_csv(std::ostream& out, const ReplicateSummary& summary);
/// scenario, n, replicates, convergence_rate, median_entropy_index, median_censoring.
void write_diagnostics_csv(std::ostream& out, const ReplicateSummary& summary);
/// criterion, num_classes, count, frequency.
void write_selection_csv(std::ostream& out, const SelectionStudy& study);
/// Long format: replicate, time, model, bs1, bs2.
void write_brier_study_csv(std::ostream& out, const BrierStudy& study);
/// Long format: time, fold, model, bs1, bs2; fold "mean" holds the averages.
void write_brier_cv_csv(std::ostream& out, const CrossValidatedBrier& result);

}  // namespace lcph
