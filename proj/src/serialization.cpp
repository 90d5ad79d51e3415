#include "maskident/serialization.hpp"

#include <cmath>

#include "maskident/error.hpp"

namespace maskident {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::Config, where + ": " + what);
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(where, "expected a finite number");
  return v;
}

// JSON has no NaN; absent values become null.
Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where, "expected a non-empty array of rows");
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) fail(where, "expected non-empty rows");
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const std::string row_where = where + "[" + std::to_string(r) + "]";
    if (!j[r].is_array() || j[r].size() != cols) fail(row_where, "expected a row of length " + std::to_string(cols));
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = number(j[r][c], row_where + "[" + std::to_string(c) + "]");
  }
  return m;
}

Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where, "expected a non-empty array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

Json params_to_json(const ModelParams& params) {
  if (const auto* h = std::get_if<HmmParams>(&params))
    return {{"kind", "hmm"}, {"d", h->d()}, {"k", h->k()}, {"emission", matrix_to_json(h->emission)},
            {"transition", matrix_to_json(h->transition)}};
  const auto& g = std::get<GhmmParams>(params);
  return {{"kind", "ghmm"}, {"d", g.d()}, {"k", g.k()}, {"means", matrix_to_json(g.means)},
          {"transition", matrix_to_json(g.transition)}};
}

ModelParams params_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
  if (!j.contains("kind") || !j["kind"].is_string()) fail(where + ".kind", "expected \"hmm\" or \"ghmm\"");
  const std::string kind = j["kind"].get<std::string>();
  if (kind != "hmm" && kind != "ghmm") fail(where + ".kind", "expected \"hmm\" or \"ghmm\", got \"" + kind + "\"");
  const std::string primary = kind == "hmm" ? "emission" : "means";
  for (const auto& [key, value] : j.items())
    if (key != "kind" && key != "d" && key != "k" && key != primary && key != "transition")
      fail(where + "." + key, "unknown key");
  if (!j.contains(primary)) fail(where + "." + primary, "missing");
  if (!j.contains("transition")) fail(where + ".transition", "missing");
  const Matrix p = matrix_from_json(j[primary], where + "." + primary);
  const Matrix t = matrix_from_json(j["transition"], where + ".transition");
  if (j.contains("d") && (!j["d"].is_number_integer() || j["d"].get<Index>() != p.rows()))
    fail(where + ".d", "does not match the " + primary + " row count");
  if (j.contains("k") && (!j["k"].is_number_integer() || j["k"].get<Index>() != p.cols()))
    fail(where + ".k", "does not match the " + primary + " column count");
  if (t.rows() != p.cols() || t.cols() != p.cols()) fail(where + ".transition", "must be k x k");
  if (kind == "hmm") return HmmParams{p, t};
  return GhmmParams{p, t};
}

Json tensor_to_json(const Tensor3& t) {
  const auto& dims = t.dims();
  return {{"dims", {dims[0], dims[1], dims[2]}}, {"data", t.data()}};
}

Tensor3 tensor_from_json(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("dims") || !j.contains("data")) fail(where, "expected {\"dims\",\"data\"}");
  const Json& dims = j["dims"];
  if (!dims.is_array() || dims.size() != 3) fail(where + ".dims", "expected three dimensions");
  std::array<Index, 3> d{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!dims[i].is_number_integer() || dims[i].get<Index>() < 1) fail(where + ".dims", "expected positive integers");
    d[i] = dims[i].get<Index>();
  }
  if (!j["data"].is_array()) fail(where + ".data", "expected an array");
  std::vector<double> data;
  for (std::size_t i = 0; i < j["data"].size(); ++i)
    data.push_back(number(j["data"][i], where + ".data[" + std::to_string(i) + "]"));
  if (static_cast<Index>(data.size()) != d[0] * d[1] * d[2]) fail(where + ".data", "length does not match dims");
  return Tensor3(d, std::move(data));
}

Json report_to_json(const RecoveryReport& report, bool include_timing) {
  Json diag = Json::object();
  for (const auto& [key, value] : report.diagnostics) diag[key] = value;
  Json out = {{"method", report.method},
              {"seed", report.seed},
              {"recovered", params_to_json(report.recovered)},
              {"permutation", report.permutation},
              {"err_primary", optional_number(report.primary_error)},
              {"err_transition", optional_number(report.transition_error)},
              {"tensor_residual", report.tensor_residual},
              {"diagnostics", diag}};
  if (include_timing) out["wall_ms"] = report.wall_ms;
  return out;
}

Json pair_to_json(const CounterexamplePair& pair) {
  Json tasks = Json::array();
  for (const auto& t : pair.tasks) tasks.push_back(t.to_string());
  return {{"construction", pair.construction},
          {"theta", optional_number(pair.theta)},
          {"tasks", tasks},
          {"original", params_to_json(pair.original)},
          {"alternative", params_to_json(pair.alternative)}};
}

Json validation_to_json(const CounterexampleReport& report) {
  Json tasks = Json::object();
  for (const auto& [task, gap] : report.task_discrepancy) tasks[task] = gap;
  return {{"task_discrepancy", tasks},
          {"max_discrepancy", report.max_discrepancy},
          {"emission_distance", report.emission_distance},
          {"parameter_distance", report.parameter_distance},
          {"params_valid", report.params_valid},
          {"params_summary", report.params_summary},
          {"predictors_equal", report.predictors_equal},
          {"distinct", report.distinct},
          {"passed", report.passed}};
}

Json certificate_to_json(const HouseholderCertificate& cert) {
  return {{"v_hat", vector_to_json(cert.v_hat)},
          {"h", matrix_to_json(cert.h)},
          {"reflected_means", matrix_to_json(cert.reflected_means)},
          {"column_sums", vector_to_json(cert.column_sums)},
          {"involution_residual", cert.involution_residual},
          {"unit_norm_residual", cert.unit_norm_residual},
          {"translation_residual", cert.translation_residual},
          {"column_sum_residual", cert.column_sum_residual},
          {"verified", cert.verified}};
}

}  // namespace maskident
