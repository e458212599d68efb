#include "lcph/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace lcph {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw InputError(source + ":" + std::to_string(line) + ": " + what);
}

double parse_number(std::string_view field, const std::string& source, std::size_t line,
                    std::size_t column) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc() || ptr != last)
    fail(source, line, "column " + std::to_string(column) + ": '" + std::string(field) +
                           "' is not a number");
  return value;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_rows(const json& rows, Index cols) {
  Matrix m(static_cast<Index>(rows.size()), cols);
  for (Index r = 0; r < m.rows(); ++r) {
    const json& row = rows.at(static_cast<std::size_t>(r));
    if (static_cast<Index>(row.size()) != cols) throw InputError("json: ragged matrix");
    for (Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

const char* init_name(Initialization init) {
  switch (init) {
    case Initialization::random: return "random";
    case Initialization::kmeans: return "kmeans";
    case Initialization::supplied_weights: return "supplied";
  }
  return "?";
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "NA";
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

}  // namespace

Dataset read_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header_line = line;
      break;
    }
  }
  if (header_line.empty()) throw InputError(source + ": empty input");
  header = split(header_line);
  if (header.size() < 2) fail(source, line_no, "header needs at least time and status columns");
  if (header[0] != "time" || header[1] != "status")
    fail(source, line_no, "header must start with time,status");
  std::vector<std::string> names;
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (header[c].empty()) fail(source, line_no, "empty covariate name in header");
    names.emplace_back(header[c]);
  }
  const std::size_t width = header.size();

  std::vector<double> times, values;
  std::vector<int> status;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != width)
      fail(source, line_no, "expected " + std::to_string(width) + " fields, found " +
                                std::to_string(fields.size()));
    const double t = parse_number(fields[0], source, line_no, 1);
    if (!std::isfinite(t) || t < 0.0) fail(source, line_no, "time must be finite and >= 0");
    const double d = parse_number(fields[1], source, line_no, 2);
    if (d != 0.0 && d != 1.0) fail(source, line_no, "status must be 0 or 1");
    times.push_back(t);
    status.push_back(static_cast<int>(d));
    for (std::size_t c = 2; c < width; ++c) {
      const double x = parse_number(fields[c], source, line_no, c + 1);
      if (!std::isfinite(x)) fail(source, line_no, "covariates must be finite");
      values.push_back(x);
    }
  }
  if (times.empty()) throw InputError(source + ": no data rows");

  const auto n = static_cast<Index>(times.size());
  const auto p = static_cast<Index>(names.size());
  Matrix x(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < p; ++k) x(i, k) = values[static_cast<std::size_t>(i * p + k)];
  IntVector s = Eigen::Map<const IntVector>(status.data(), n);
  return Dataset(Eigen::Map<const Vector>(times.data(), n), std::move(s), std::move(x),
                 std::move(names));
}

CovariateTable read_covariate_csv(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::string header_line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header_line = line;
      break;
    }
  }
  if (header_line.empty()) throw InputError(source + ": empty input");
  const auto header = split(header_line);
  std::vector<std::size_t> keep;
  CovariateTable table;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "time" || header[c] == "status") continue;
    if (header[c].empty()) fail(source, line_no, "empty column name in header");
    keep.push_back(c);
    table.names.emplace_back(header[c]);
  }
  std::vector<double> values;
  Index rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size())
      fail(source, line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                std::to_string(fields.size()));
    for (std::size_t c : keep) values.push_back(parse_number(fields[c], source, line_no, c + 1));
    ++rows;
  }
  if (rows == 0) throw InputError(source + ": no data rows");
  const auto p = static_cast<Index>(keep.size());
  table.values.resize(rows, p);
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < p; ++k) table.values(i, k) = values[static_cast<std::size_t>(i * p + k)];
  return table;
}

Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_csv(in, path);
}

void write_csv(std::ostream& out, const Dataset& data) {
  out << "time,status";
  for (const std::string& name : data.covariate_names()) out << ',' << name;
  out << '\n' << std::setprecision(17);
  for (Index i = 0; i < data.size(); ++i) {
    out << data.times()[i] << ',' << data.status()[i];
    for (Index k = 0; k < data.num_covariates(); ++k) out << ',' << data.covariates()(i, k);
    out << '\n';
  }
}

Dataset standardize(const Dataset& data, Standardization* info) {
  const Matrix& x = data.covariates();
  const Vector mean = x.colwise().mean().transpose();
  Vector sd(x.cols());
  Matrix z = x.rowwise() - mean.transpose();
  for (Index k = 0; k < x.cols(); ++k) {
    const double n = static_cast<double>(x.rows());
    sd[k] = n > 1 ? std::sqrt(z.col(k).squaredNorm() / (n - 1.0)) : 0.0;
    if (sd[k] > 0.0) z.col(k) /= sd[k];
  }
  if (info) *info = {mean, sd};
  return Dataset(data.times(), data.status(), std::move(z), data.covariate_names());
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

json config_to_json(const ModelConfig& config) {
  return {{"num_classes", config.num_classes},
          {"membership_covariates", config.membership_covariates},
          {"survival_covariates", config.survival_covariates},
          {"tolerance", config.tolerance},
          {"max_iterations", config.max_iterations},
          {"initialization", init_name(config.initialization)},
          {"seed", config.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig config;
  config.num_classes = j.at("num_classes").get<int>();
  config.membership_covariates = j.at("membership_covariates").get<std::vector<Index>>();
  config.survival_covariates = j.at("survival_covariates").get<std::vector<Index>>();
  config.tolerance = j.value("tolerance", config.tolerance);
  config.max_iterations = j.value("max_iterations", config.max_iterations);
  config.seed = j.value("seed", config.seed);
  const std::string init = j.value("initialization", std::string("kmeans"));
  if (init == "random")
    config.initialization = Initialization::random;
  else if (init == "kmeans")
    config.initialization = Initialization::kmeans;
  else if (init == "supplied")
    config.initialization = Initialization::supplied_weights;
  else
    throw InputError("json: unknown initialization '" + init + "'");
  return config;
}

json to_json(const FitReport& r) {
  const std::vector<std::string> names = theta_names(r.config, r.covariate_names);
  const Vector theta = pack_theta(r.params);
  const bool have_se = r.standard_errors.size() == theta.size();
  json estimates = json::array();
  for (Index k = 0; k < theta.size(); ++k) {
    json e = {{"name", names[static_cast<std::size_t>(k)]}, {"estimate", theta[k]}};
    e["see"] = have_se ? number_or_null(r.standard_errors[k]) : json(nullptr);
    e["ci_lower"] = have_se && k < static_cast<Index>(r.intervals.size())
                        ? number_or_null(r.intervals[static_cast<std::size_t>(k)].lower)
                        : json(nullptr);
    e["ci_upper"] = have_se && k < static_cast<Index>(r.intervals.size())
                        ? number_or_null(r.intervals[static_cast<std::size_t>(k)].upper)
                        : json(nullptr);
    estimates.push_back(std::move(e));
  }

  const CriteriaReport& c = r.criteria;
  json j;
  j["schema_version"] = r.schema_version;
  j["timestamp"] = r.timestamp;
  j["seed"] = r.seed;
  j["input"] = r.input;
  j["n"] = r.n;
  j["standardized"] = r.standardized;
  if (r.standardized)
    j["standardization"] = {{"mean", vector_json(r.standardization.mean)},
                            {"sd", vector_json(r.standardization.sd)}};
  j["covariate_names"] = r.covariate_names;
  j["config"] = config_to_json(r.config);
  j["estimates"] = std::move(estimates);
  j["confidence_level"] = 0.95;
  j["alpha"] = matrix_rows(r.params.alpha);
  j["gamma"] = vector_json(r.params.gamma);
  j["baseline"] = {{"times", vector_json(r.params.baseline.jump_times())},
                   {"jumps", vector_json(r.params.baseline.jump_sizes())},
                   {"cumulative", vector_json(r.params.baseline.cumulative())}};
  j["loglik"] = r.loglik();
  j["loglik_history"] = r.loglik_history;
  j["criteria"] = {{"num_params", c.num_params}, {"aic", c.aic},
                   {"bic", c.bic},               {"icl_bic", c.icl_bic},
                   {"entropy", c.entropy},       {"entropy_index", c.entropy_index}};
  j["convergence"] = {{"converged", r.converged},
                      {"iterations", r.iterations},
                      {"max_loglik_drop", r.max_loglik_drop}};
  j["covariance_error"] = r.covariance_error;
  return j;
}

FitReport fit_report_from_json(const json& j) {
  FitReport r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != kResultSchemaVersion)
    throw InputError("json: unsupported schema_version " + std::to_string(r.schema_version));
  r.timestamp = j.value("timestamp", std::string());
  r.seed = j.value("seed", std::uint64_t{0});
  r.input = j.value("input", std::string());
  r.n = j.value("n", Index{0});
  r.standardized = j.value("standardized", false);
  if (r.standardized) {
    r.standardization.mean = vector_from(j.at("standardization").at("mean"));
    r.standardization.sd = vector_from(j.at("standardization").at("sd"));
  }
  r.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
  r.config = config_from_json(j.at("config"));
  r.params.alpha = matrix_from_rows(j.at("alpha"), r.config.membership_dim());
  r.params.gamma = vector_from(j.at("gamma"));
  const json& b = j.at("baseline");
  r.params.baseline = Baseline(vector_from(b.at("times")), vector_from(b.at("jumps")));
  r.loglik_history = j.at("loglik_history").get<std::vector<double>>();
  const json& conv = j.at("convergence");
  r.converged = conv.at("converged").get<bool>();
  r.iterations = conv.at("iterations").get<int>();
  r.max_loglik_drop = conv.value("max_loglik_drop", 0.0);
  const json& c = j.at("criteria");
  r.criteria.num_classes = r.config.num_classes;
  r.criteria.loglik = r.loglik();
  r.criteria.num_params = c.at("num_params").get<Index>();
  r.criteria.aic = c.at("aic").get<double>();
  r.criteria.bic = c.at("bic").get<double>();
  r.criteria.icl_bic = c.at("icl_bic").get<double>();
  r.criteria.entropy = c.at("entropy").get<double>();
  r.criteria.entropy_index = c.at("entropy_index").get<double>();
  r.criteria.converged = r.converged;
  const json& est = j.at("estimates");
  if (!est.empty() && !est.front().at("see").is_null()) {
    r.standard_errors.resize(static_cast<Index>(est.size()));
    for (std::size_t k = 0; k < est.size(); ++k) {
      r.standard_errors[static_cast<Index>(k)] = number_from(est[k].at("see"));
      r.intervals.push_back({number_from(est[k].at("ci_lower")), number_from(est[k].at("ci_upper"))});
    }
  }
  r.covariance_error = j.value("covariance_error", std::string());
  check_dimensions(r.params, r.config);
  return r;
}

ScenarioSpec scenario_from_json(const json& j) {
  const std::string id = j.at("id").get<std::string>();
  ScenarioSpec s;
  if (j.contains("alpha") || j.contains("gamma")) {
    s.id = id;
    s.num_classes = j.at("num_classes").get<int>();
    s.censoring_rate = j.at("censoring_rate").get<double>();
    s.alpha = matrix_from_rows(j.at("alpha"), 3);
    s.gamma = vector_from(j.at("gamma"));
  } else {
    s = ScenarioSpec::table(id);
    s.censoring_rate = j.value("censoring_rate", s.censoring_rate);
  }
  s.n = j.value("n", s.n);
  s.seed = j.value("seed", s.seed);
  s.horizon = j.value("horizon", s.horizon);
  s.validate();
  return s;
}

void write_criteria_csv(std::ostream& out, std::span<const CriteriaReport> table) {
  out << "num_classes,loglik,num_params,aic,bic,icl_bic,entropy_index,converged\n";
  for (const CriteriaReport& r : table)
    out << r.num_classes << ',' << csv_number(r.loglik) << ',' << r.num_params << ','
        << csv_number(r.aic) << ',' << csv_number(r.bic) << ',' << csv_number(r.icl_bic) << ','
        << csv_number(r.entropy_index) << ',' << (r.converged ? 1 : 0) << '\n';
}

void write_estimation_csv(std::ostream& out, const ReplicateSummary& s) {
  out << "scenario,n,parameter,truth,median_bias,se,see,cp,used\n";
  auto row = [&](const ParameterSummary& p) {
    out << s.scenario << ',' << s.n << ',' << p.name << ',' << csv_number(p.truth) << ','
        << csv_number(p.median_bias) << ',' << csv_number(p.sd) << ',' << csv_number(p.median_see)
        << ',' << csv_number(p.coverage) << ',' << p.used << '\n';
  };
  for (const ParameterSummary& p : s.parameters) row(p);
  row(s.cumulative_hazard_3);
}

void write_diagnostics_csv(std::ostream& out, const ReplicateSummary& s) {
  out << "scenario,n,replicates,failures,converged,convergence_rate,median_entropy_index,"
         "median_censoring\n"
      << s.scenario << ',' << s.n << ',' << s.replicates << ',' << s.failures << ','
      << s.converged << ',' << csv_number(s.convergence_rate) << ','
      << csv_number(s.median_entropy_index) << ',' << csv_number(s.median_censoring) << '\n';
}

void write_selection_csv(std::ostream& out, const SelectionStudy& study) {
  constexpr Criterion kAll[] = {Criterion::aic, Criterion::bic, Criterion::icl_bic,
                                Criterion::entropy_index};
  out << "criterion,num_classes,count,frequency\n";
  for (Criterion c : kAll)
    for (std::size_t k = 0; k < study.candidates.size(); ++k)
      out << criterion_name(c) << ',' << study.candidates[k] << ','
          << study.counts[static_cast<std::size_t>(c)][k] << ','
          << csv_number(study.frequency(c, study.candidates[k])) << '\n';
}

void write_brier_study_csv(std::ostream& out, const BrierStudy& study) {
  out << "replicate,time,model,bs1,bs2\n";
  for (Index r = 0; r < study.model_bs1.rows(); ++r)
    for (std::size_t g = 0; g < study.grid.size(); ++g) {
      const auto col = static_cast<Index>(g);
      out << r << ',' << csv_number(study.grid[g]) << ",latent-class,"
          << csv_number(study.model_bs1(r, col)) << ',' << csv_number(study.model_bs2(r, col))
          << '\n';
      out << r << ',' << csv_number(study.grid[g]) << ",cox," << csv_number(study.comparator_bs1(r, col))
          << ',' << csv_number(study.comparator_bs2(r, col)) << '\n';
    }
}

void write_brier_cv_csv(std::ostream& out, const CrossValidatedBrier& result) {
  out << "time,fold,model,bs1,bs2\n";
  auto emit = [&](const BrierCurve& c, const std::string& fold, const char* model) {
    for (Index g = 0; g < c.times.size(); ++g)
      out << csv_number(c.times[g]) << ',' << fold << ',' << model << ',' << csv_number(c.bs1[g])
          << ',' << csv_number(c.bs2[g]) << '\n';
  };
  for (std::size_t f = 0; f < result.model_folds.size(); ++f)
    emit(result.model_folds[f], std::to_string(f + 1), "latent-class");
  for (std::size_t f = 0; f < result.comparator_folds.size(); ++f)
    emit(result.comparator_folds[f], std::to_string(f + 1), "cox");
  emit(result.model, "mean", "latent-class");
  emit(result.comparator, "mean", "cox");
}

}  // namespace lcph
