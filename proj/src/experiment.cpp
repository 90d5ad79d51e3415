#include "maskident/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "maskident/error.hpp"

namespace maskident {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::string_view kCommandNames[] = {"predict", "recover", "counterexample", "kruskal-rank",
                                              "verify-fixtures"};

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::Config, where + ": " + what);
}

void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (const auto& [key, value] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      std::string list;
      for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
      fail(where + "." + key, "unknown key (allowed: " + list + ")");
    }
}

std::uint64_t get_u64(const Json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  fail(where, "expected a non-negative integer");
}

Index get_positive(const Json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 1) fail(where, "expected a positive integer");
  return static_cast<Index>(j.get<std::int64_t>());
}

double get_positive_real(const Json& j, const std::string& where) {
  if (!j.is_number() || !(j.get<double>() > 0.0)) fail(where, "expected a positive number");
  return j.get<double>();
}

double get_real(const Json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

std::string get_string(const Json& j, const std::string& where) {
  if (!j.is_string()) fail(where, "expected a string");
  return j.get<std::string>();
}

std::string read_file(const std::string& path, const std::string& where) {
  std::ifstream in(path);
  if (!in) fail(where, "cannot open file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json parse_json(std::string_view text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail(where, std::string("malformed JSON: ") + e.what());
  }
}

MaskedTask parse_task(const Json& j, const std::string& where) {
  MaskedTask task;
  try {
    if (j.is_string()) {
      task = MaskedTask::parse(j.get<std::string>());
    } else {
      check_keys(j, {"predicted", "conditioned"}, where);
      for (const char* key : {"predicted", "conditioned"}) {
        if (!j.contains(key) || !j[key].is_array()) fail(where + "." + key, "expected an array of times");
        std::vector<int>& out = std::string_view(key) == "predicted" ? task.predicted : task.conditioned;
        for (const auto& t : j[key]) {
          if (!t.is_number_integer()) fail(where + "." + key, "expected integer times");
          out.push_back(t.get<int>());
        }
      }
    }
    check_task(task);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    fail(where, e.what());
  }
  return task;
}

bool is_gaussian(const ExperimentConfig& c) {
  if (c.model) return std::holds_alternative<GhmmParams>(*c.model);
  return c.generator && c.generator->kind == "ghmm";
}

std::vector<std::string_view> recover_methods(bool gaussian) {
  if (gaussian) return {"jennrich", "far_field", "density"};
  return {"jennrich", "eigen_pair", "joint", "empirical_joint"};
}

std::string default_task(std::string_view method) {
  if (method == "joint" || method == "empirical_joint") return "x3|x1x2";
  if (method == "far_field" || method == "density") return "x2|x1";
  return "x2x3|x1";
}

void check_parameters(const ExperimentConfig& c, const std::string& where) {
  const Json& p = c.parameters;
  if (c.command == Command::Recover) {
    if (c.method == "empirical_joint") check_keys(p, {"samples", "consistency_tolerance"}, where);
    else if (c.method == "jennrich" && is_gaussian(c)) check_keys(p, {"probe_budget"}, where);
    else if (c.method == "far_field") check_keys(p, {"far_radius", "n_directions"}, where);
    else check_keys(p, {}, where);
    if (p.contains("samples")) get_positive(p["samples"], where + ".samples");
    if (p.contains("consistency_tolerance")) get_positive_real(p["consistency_tolerance"], where + ".consistency_tolerance");
    if (p.contains("probe_budget")) get_positive(p["probe_budget"], where + ".probe_budget");
    if (p.contains("far_radius")) get_positive_real(p["far_radius"], where + ".far_radius");
    if (p.contains("n_directions")) get_positive(p["n_directions"], where + ".n_directions");
  } else if (c.command == Command::Counterexample) {
    if (c.construction == "simplex_rotation") {
      check_keys(p, {"theta", "structure_tolerance"}, where);
      if (!p.contains("theta")) fail(where + ".theta", "missing");
      get_real(p["theta"], where + ".theta");
      if (p.contains("structure_tolerance")) get_positive_real(p["structure_tolerance"], where + ".structure_tolerance");
    } else if (c.construction == "power_rotation" || c.construction == "power_rotation_gaussian") {
      check_keys(p, {"t", "a"}, where);
      if (!p.contains("t")) fail(where + ".t", "missing");
      get_positive(p["t"], where + ".t");
      if (p.contains("a")) get_real(p["a"], where + ".a");
    } else {
      check_keys(p, {}, where);
    }
  } else {
    check_keys(p, {}, where);
  }
}

Json generator_json(const GeneratorSpec& g) {
  return {{"kind", g.kind},
          {"d", g.d},
          {"k", g.k},
          {"seed", g.seed ? Json(*g.seed) : Json(nullptr)},
          {"symmetric", g.symmetric},
          {"condition_floor", g.condition_floor}};
}

}  // namespace

std::string_view to_string(Command command) { return kCommandNames[static_cast<int>(command)]; }

Command parse_command(std::string_view name, const std::string& where) {
  for (int i = 0; i < 5; ++i)
    if (kCommandNames[i] == name) return static_cast<Command>(i);
  fail(where, "unknown command '" + std::string(name) +
                  "' (expected one of: predict, recover, counterexample, kruskal-rank, verify-fixtures)");
}

ExperimentConfig parse_config(std::string_view text) {
  const Json j = parse_json(text, "config");
  check_keys(j, {"command", "model", "generator", "task", "method", "trials", "seed", "tolerances", "inputs",
                 "construction", "parameters", "matrix", "outputs"},
             "config");
  ExperimentConfig c;
  if (!j.contains("command")) fail("config.command", "missing required field");
  c.command = parse_command(get_string(j["command"], "config.command"));

  std::string model_path;
  if (j.contains("model")) {
    if (j["model"].is_string()) {
      model_path = j["model"].get<std::string>();
      const std::string where = "config.model";
      c.model = params_from_json(parse_json(read_file(model_path, where), where + " (" + model_path + ")"),
                                 where + " (" + model_path + ")");
    } else {
      c.model = params_from_json(j["model"], "config.model");
    }
  }
  if (j.contains("generator")) {
    const Json& g = j["generator"];
    check_keys(g, {"kind", "d", "k", "seed", "symmetric", "condition_floor"}, "config.generator");
    GeneratorSpec spec;
    if (g.contains("kind")) spec.kind = get_string(g["kind"], "config.generator.kind");
    if (spec.kind != "hmm" && spec.kind != "ghmm") fail("config.generator.kind", "expected \"hmm\" or \"ghmm\"");
    if (!g.contains("d")) fail("config.generator.d", "missing required field");
    if (!g.contains("k")) fail("config.generator.k", "missing required field");
    spec.d = get_positive(g["d"], "config.generator.d");
    spec.k = get_positive(g["k"], "config.generator.k");
    if (spec.k > spec.d) fail("config.generator.k", "must not exceed d");
    if (g.contains("seed")) spec.seed = get_u64(g["seed"], "config.generator.seed");
    if (g.contains("symmetric")) {
      if (!g["symmetric"].is_boolean()) fail("config.generator.symmetric", "expected a boolean");
      spec.symmetric = g["symmetric"].get<bool>();
    }
    if (g.contains("condition_floor"))
      spec.condition_floor = get_positive_real(g["condition_floor"], "config.generator.condition_floor");
    c.generator = spec;
  }
  if (c.model && c.generator) fail("config.model", "give either model or generator, not both");

  if (j.contains("trials")) c.trials = get_positive(j["trials"], "config.trials");
  if (j.contains("seed")) c.seed = get_u64(j["seed"], "config.seed");
  if (j.contains("tolerances")) {
    const Json& t = j["tolerances"];
    check_keys(t, {"error", "discrepancy", "distinctness", "structure", "params"}, "config.tolerances");
    if (t.contains("error")) c.tolerances.error = get_positive_real(t["error"], "config.tolerances.error");
    if (t.contains("discrepancy")) c.tolerances.discrepancy = get_positive_real(t["discrepancy"], "config.tolerances.discrepancy");
    if (t.contains("distinctness")) c.tolerances.distinctness = get_positive_real(t["distinctness"], "config.tolerances.distinctness");
    if (t.contains("structure")) c.tolerances.structure = get_positive_real(t["structure"], "config.tolerances.structure");
    if (t.contains("params")) c.tolerances.params = get_positive_real(t["params"], "config.tolerances.params");
  }
  if (j.contains("outputs")) {
    const Json& o = j["outputs"];
    check_keys(o, {"json", "csv"}, "config.outputs");
    if (o.contains("json")) c.out_json = get_string(o["json"], "config.outputs.json");
    if (o.contains("csv")) c.out_csv = get_string(o["csv"], "config.outputs.csv");
  }
  if (j.contains("method")) c.method = get_string(j["method"], "config.method");
  if (j.contains("construction")) c.construction = get_string(j["construction"], "config.construction");
  if (j.contains("parameters")) {
    if (!j["parameters"].is_object()) fail("config.parameters", "expected an object");
    c.parameters = j["parameters"];
  }
  if (j.contains("task")) c.task = parse_task(j["task"], "config.task");

  switch (c.command) {
    case Command::Recover: {
      if (!c.model && !c.generator) fail("config.model", "recover needs a model or a generator");
      const auto methods = recover_methods(is_gaussian(c));
      if (c.method.empty()) c.method = "jennrich";
      if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) {
        std::string list;
        for (auto m : methods) list += (list.empty() ? "" : ", ") + std::string(m);
        fail("config.method", "unknown method '" + c.method + "' for this model kind (expected one of: " + list + ")");
      }
      if (!c.task) c.task = MaskedTask::parse(default_task(c.method));
      break;
    }
    case Command::Predict:
      if (!c.model && !c.generator) fail("config.model", "predict needs a model or a generator");
      if (!c.task) fail("config.task", "missing required field");
      try {
        check_supported(*c.task, is_gaussian(c));
      } catch (const Error& e) {
        fail("config.task", e.what());
      }
      if (!j.contains("inputs") || !j["inputs"].is_array() || j["inputs"].empty())
        fail("config.inputs", "expected a non-empty array of conditioned observations");
      c.inputs = j["inputs"];
      break;
    case Command::Counterexample: {
      constexpr std::string_view constructions[] = {"fixture_pair", "simplex_rotation", "power_rotation",
                                                    "power_rotation_gaussian", "householder"};
      if (c.construction.empty()) fail("config.construction", "missing required field");
      if (std::find(std::begin(constructions), std::end(constructions), c.construction) == std::end(constructions))
        fail("config.construction", "unknown construction '" + c.construction +
                                        "' (expected one of: fixture_pair, simplex_rotation, power_rotation, "
                                        "power_rotation_gaussian, householder)");
      if (c.construction == "householder" && !is_gaussian(c))
        fail("config.model", "householder needs a ghmm model or generator");
      break;
    }
    case Command::KruskalRank:
      if (!j.contains("matrix")) fail("config.matrix", "missing required field");
      c.matrix = matrix_from_json(j["matrix"], "config.matrix");
      if (c.matrix->cols() > kKruskalRankLimit) fail("config.matrix", "at most 12 columns are supported");
      break;
    case Command::VerifyFixtures:
      break;
  }
  if (c.command != Command::Predict && j.contains("inputs")) fail("config.inputs", "only used by predict");
  if (c.command != Command::KruskalRank && j.contains("matrix")) fail("config.matrix", "only used by kruskal-rank");
  if (c.command != Command::Counterexample && j.contains("construction"))
    fail("config.construction", "only used by counterexample");
  check_parameters(c, "config.parameters");

  c.echo = {{"command", std::string(to_string(c.command))},
            {"model", c.model ? params_to_json(*c.model) : Json(nullptr)},
            {"model_path", model_path.empty() ? Json(nullptr) : Json(model_path)},
            {"generator", c.generator ? generator_json(*c.generator) : Json(nullptr)},
            {"task", c.task ? Json(c.task->to_string()) : Json(nullptr)},
            {"method", c.method.empty() ? Json(nullptr) : Json(c.method)},
            {"trials", c.trials},
            {"seed", c.seed},
            {"tolerances",
             {{"error", c.tolerances.error},
              {"discrepancy", c.tolerances.discrepancy},
              {"distinctness", c.tolerances.distinctness},
              {"structure", c.tolerances.structure},
              {"params", c.tolerances.params}}},
            {"inputs", c.inputs.is_null() ? Json(nullptr) : c.inputs},
            {"construction", c.construction.empty() ? Json(nullptr) : Json(c.construction)},
            {"parameters", c.parameters},
            {"matrix", c.matrix ? matrix_to_json(*c.matrix) : Json(nullptr)},
            {"outputs", {{"json", c.out_json}, {"csv", c.out_csv}}}};
  return c;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_file(path, "config")); }

// ---------------------------------------------------------------------------
// Trials

namespace {

ModelParams instance_for(const ExperimentConfig& c, Index trial) {
  if (c.model) return *c.model;
  const GeneratorSpec& g = *c.generator;
  const std::uint64_t seed = stream_seed(g.seed.value_or(c.seed), static_cast<std::uint64_t>(trial));
  if (g.kind == "hmm") return random_hmm(g.d, g.k, seed, g.symmetric, g.condition_floor);
  return random_ghmm(g.d, g.k, seed, g.symmetric, g.condition_floor);
}

template <typename T>
T param_or(const Json& p, const char* key, T fallback) {
  return p.contains(key) ? p[key].get<T>() : fallback;
}

void recover_trial(const ExperimentConfig& c, TrialRow& row) {
  const ModelParams truth = instance_for(c, row.trial);
  const MaskedTask& task = *c.task;
  const Json& p = c.parameters;
  row.method = c.method;

  if (const auto* g = std::get_if<GhmmParams>(&truth); g != nullptr && c.method == "density") {
    const DensityRecovery rec = recover_T_from_conditional_density(make_density_oracle(*g), g->means, row.seed);
    row.err_transition = (rec.transition - g->transition).cwiseAbs().maxCoeff();
    row.pass = *row.err_transition <= c.tolerances.error;
    row.detail = {{"transition", matrix_to_json(rec.transition)},
                  {"attempts", rec.attempts},
                  {"psi_condition", rec.psi_condition},
                  {"phi_condition", rec.phi_condition},
                  {"projection", rec.projection}};
    return;
  }

  RecoveryReport report;
  if (const auto* h = std::get_if<HmmParams>(&truth)) {
    const DiscreteOracle oracle = make_oracle(*h, task);
    if (c.method == "jennrich") {
      report = recover_hmm_two_given_one(oracle, h->k(), row.seed);
    } else if (c.method == "eigen_pair") {
      report = recover_hmm_eigen_pair(oracle, h->k(), row.seed);
    } else if (c.method == "joint") {
      const Matrix joint = joint_pair_distribution(*h, task.conditioned[0], task.conditioned[1]);
      report = recover_hmm_one_given_two(oracle, joint, h->k(), row.seed);
    } else {
      const Matrix joint = empirical_pair_distribution(*h, task.conditioned[0], task.conditioned[1],
                                                       param_or<Index>(p, "samples", 1000000),
                                                       stream_seed(row.seed, 1));
      report = recover_hmm_one_given_two(oracle, joint, h->k(), row.seed,
                                         param_or<double>(p, "consistency_tolerance", 0.05));
    }
  } else {
    const auto& gh = std::get<GhmmParams>(truth);
    const GaussianOracle oracle = make_oracle(gh, task);
    if (c.method == "jennrich") {
      GhmmThreeTokenOptions options;
      options.probe_budget = param_or<Index>(p, "probe_budget", 0);
      report = recover_ghmm_two_given_one(oracle, gh.k(), row.seed, options);
    } else {
      GhmmPairwiseOptions options;
      options.far_radius = param_or<double>(p, "far_radius", options.far_radius);
      options.n_directions = param_or<Index>(p, "n_directions", 0);
      report = recover_ghmm_pairwise(oracle, gh.k(), row.seed, options);
    }
  }
  score(report, truth);
  row.err_primary = report.primary_error;
  row.err_transition = report.transition_error;
  row.residual = report.tensor_residual;
  row.pass = *row.err_primary <= c.tolerances.error && *row.err_transition <= c.tolerances.error;
  row.detail = report_to_json(report);
}

void predict_trial(const ExperimentConfig& c, TrialRow& row) {
  const ModelParams params = instance_for(c, row.trial);
  const MaskedTask& task = *c.task;
  row.method = "predict";
  Json outputs = Json::array();
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    const std::string where = "config.inputs[" + std::to_string(i) + "]";
    const Json& in = c.inputs[i];
    Matrix out;
    if (const auto* h = std::get_if<HmmParams>(&params)) {
      std::vector<Index> x;
      if (in.is_number_integer()) x.push_back(in.get<Index>());
      else if (in.is_array())
        for (const auto& v : in) {
          if (!v.is_number_integer()) fail(where, "expected basis indices");
          x.push_back(v.get<Index>());
        }
      else fail(where, "expected a basis index or an array of them");
      out = predict(*h, task, x);
    } else {
      std::vector<Vector> x;
      if (in.is_array() && !in.empty() && in.front().is_number()) x.push_back(vector_from_json(in, where));
      else if (in.is_array())
        for (std::size_t k = 0; k < in.size(); ++k) x.push_back(vector_from_json(in[k], where + "[" + std::to_string(k) + "]"));
      else fail(where, "expected a vector or an array of vectors");
      out = predict(std::get<GhmmParams>(params), task, x);
    }
    outputs.push_back(matrix_to_json(out));
  }
  row.pass = true;
  row.detail = {{"task", task.to_string()}, {"model", params_to_json(params)}, {"outputs", outputs}};
}

std::vector<MaskedTask> fixture_tasks() {
  return {MaskedTask::parse("x2|x1"), MaskedTask::parse("x1|x2"), MaskedTask::parse("x3|x1"),
          MaskedTask::parse("x1|x3")};
}

void counterexample_trial(const ExperimentConfig& c, TrialRow& row) {
  const Json& p = c.parameters;
  row.method = c.construction;
  if (c.construction == "householder") {
    const auto g = std::get<GhmmParams>(instance_for(c, row.trial));
    const HouseholderCertificate cert = householder_certificate(g);
    const double gap = householder_posterior_gap(g, cert, 100, row.seed);
    row.err_primary = gap;
    row.residual = cert.column_sum_residual;
    row.pass = cert.verified && gap <= 1e-10;
    row.detail = {{"certificate", certificate_to_json(cert)}, {"posterior_gap", gap}, {"model", params_to_json(g)}};
    return;
  }

  CounterexamplePair pair;
  try {
    if (c.construction == "fixture_pair") {
      const FixtureBundle f = fixture(FixtureName::PairwiseHmmCounterexample);
      pair = {*f.original, *f.alternative, fixture_tasks(), "fixture_pair", std::nullopt};
    } else if (c.construction == "simplex_rotation") {
      const HmmParams base = c.model ? std::get<HmmParams>(*c.model) : *fixture(FixtureName::SimplexBase).original;
      pair = simplex_rotation_pair(base, p["theta"].get<double>(),
                                   param_or<double>(p, "structure_tolerance", c.tolerances.structure));
    } else if (c.construction == "power_rotation") {
      std::optional<Matrix> emission;
      if (c.model) emission = std::get<HmmParams>(*c.model).emission;
      pair = power_rotation_pair(p["t"].get<int>(), param_or<double>(p, "a", 0.5), emission);
    } else {
      std::optional<Matrix> means;
      if (c.model) means = std::get<GhmmParams>(*c.model).means;
      pair = power_rotation_pair_gaussian(p["t"].get<int>(), param_or<double>(p, "a", 0.5), means);
    }
  } catch (const AngleTooLargeError& e) {
    row.error = e.what();
    row.detail = {{"max_feasible_theta", e.max_feasible()}};
    return;
  } catch (const std::bad_variant_access&) {
    fail("config.model", "model kind does not match construction " + c.construction);
  }

  ValidationOptions options;
  options.tolerance = c.tolerances.discrepancy;
  options.distinctness = c.tolerances.distinctness;
  options.params_tolerance = c.tolerances.params;
  options.seed = row.seed;
  const CounterexampleReport report = validate_counterexample(pair, options);
  row.err_primary = report.max_discrepancy;
  row.residual = report.parameter_distance;
  row.pass = report.passed;
  row.detail = {{"pair", pair_to_json(pair)}, {"validation", validation_to_json(report)}};
}

void kruskal_trial(const ExperimentConfig& c, TrialRow& row) {
  row.method = "kruskal_rank";
  const int kr = kruskal_rank(*c.matrix);
  row.pass = true;
  row.detail = {{"kruskal_rank", kr}, {"rank", numerical_rank(*c.matrix)}, {"columns", c.matrix->cols()}};
}

void verify_fixtures_trial(TrialRow& row) {
  row.method = "verify_fixtures";
  Json checks = Json::array();
  bool all = true;
  double worst_gap = 0.0;
  const auto check = [&](const std::string& name, double value, double expected, double tol, bool at_least = false,
                         bool at_most = false) {
    bool ok;
    if (at_least) ok = value >= expected;
    else if (at_most) ok = value <= expected;
    else ok = std::abs(value - expected) <= tol;
    all = all && ok;
    checks.push_back({{"check", name}, {"value", value}, {"expected", expected}, {"pass", ok}});
  };

  const FixtureBundle a = fixture(FixtureName::PairwiseHmmCounterexample);
  check("fixture_a.det_O", volume(a.original->emission), 0.0110, 5e-4);
  check("fixture_a.det_O_alt", volume(a.alternative->emission), 0.0110, 5e-4);
  check("fixture_a.det_T", volume(a.original->transition), -0.1611, 5e-4);
  check("fixture_a.det_T_alt", volume(a.alternative->transition), -0.1611, 5e-4);
  ValidationOptions options;
  options.tolerance = 1e-6;
  options.distinctness = 0.01;
  const CounterexampleReport ra = validate_counterexample(
      {*a.original, *a.alternative, fixture_tasks(), "fixture_pair", std::nullopt}, options);
  worst_gap = ra.max_discrepancy;
  check("fixture_a.max_predictor_discrepancy", ra.max_discrepancy, 1e-6, 0.0, false, true);
  check("fixture_a.emission_distance", ra.emission_distance, 0.01, 0.0, true);

  for (int t = 2; t <= 10; ++t) {
    const FixtureBundle b = fixture(FixtureName::PowerCounterexample, t);
    const std::string prefix = "fixture_b(" + std::to_string(t) + ").";
    check(prefix + "doubly_stochastic_residual", doubly_stochastic_residual(b.alt_transition), 1e-10, 0.0, false, true);
    check(prefix + "min_entry", b.alt_transition.minCoeff(), -1e-12, 0.0, true);
    check(prefix + "power_gap", max_abs(matrix_power(b.transition, t) - matrix_power(b.alt_transition, t)), 1e-10, 0.0,
          false, true);
    check(prefix + "distance", max_abs(b.transition - b.alt_transition), 1e-3, 0.0, true);
    check(prefix + "commutation", power_commutation_residual(t), 1e-10, 0.0, false, true);
  }
  row.err_primary = worst_gap;
  row.pass = all;
  row.detail = {{"checks", checks}};
}

void run_trial(const ExperimentConfig& c, TrialRow& row) {
  const auto start = Clock::now();
  try {
    switch (c.command) {
      case Command::Recover: recover_trial(c, row); break;
      case Command::Predict: predict_trial(c, row); break;
      case Command::Counterexample: counterexample_trial(c, row); break;
      case Command::KruskalRank: kruskal_trial(c, row); break;
      case Command::VerifyFixtures: verify_fixtures_trial(row); break;
    }
  } catch (const std::exception& e) {
    row.pass = false;
    row.error = e.what();
  }
  if (row.method.empty()) row.method = c.method.empty() ? std::string(to_string(c.command)) : c.method;
  row.ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json row_json(const TrialRow& r) {
  Json out = {{"trial", r.trial},
              {"seed", r.seed},
              {"method", r.method},
              {"err_primary", optional_json(r.err_primary)},
              {"err_transition", optional_json(r.err_transition)},
              {"residual", optional_json(r.residual)},
              {"pass", r.pass}};
  if (!r.error.empty()) out["error"] = r.error;
  return out;
}

std::string format_real(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

}  // namespace

unsigned worker_count(Index trials) {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MASKIDENT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) cap = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<Index>(cap, std::max<Index>(trials, 1)));
}

BatchReport run_batch(const ExperimentConfig& config) {
  const auto start = Clock::now();
  BatchReport report;
  report.config = config.echo;
  report.rows.resize(static_cast<std::size_t>(config.trials));
  for (Index i = 0; i < config.trials; ++i) {
    TrialRow& row = report.rows[static_cast<std::size_t>(i)];
    row.trial = i;
    row.seed = stream_seed(config.seed, static_cast<std::uint64_t>(i));
  }

  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < report.rows.size();) run_trial(config, report.rows[i]);
  };
  const unsigned workers = worker_count(config.trials);
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  report.total_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  return report;
}

bool BatchReport::all_passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const TrialRow& r) { return r.pass; });
}

Json aggregate_rows(const Json& rows) {
  Json out;
  std::size_t passed = 0;
  for (const auto& r : rows) passed += r["pass"].get<bool>() ? 1 : 0;
  out["trials"] = rows.size();
  out["passed"] = passed;
  out["failed"] = rows.size() - passed;
  for (const char* column : {"err_primary", "err_transition", "residual"}) {
    std::vector<double> values;
    for (const auto& r : rows)
      if (r[column].is_number()) values.push_back(r[column].get<double>());
    const std::string name(column);
    if (values.empty()) {
      out["max_" + name] = nullptr;
      out["median_" + name] = nullptr;
      continue;
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    out["max_" + name] = values.back();
    out["median_" + name] = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  }
  return out;
}

Json BatchReport::aggregate() const {
  Json table = Json::array();
  for (const auto& r : rows) table.push_back(row_json(r));
  return aggregate_rows(table);
}

Json report_to_json(const BatchReport& report) {
  Json rows = Json::array(), details = Json::array(), trial_ms = Json::array();
  for (const auto& r : report.rows) {
    rows.push_back(row_json(r));
    details.push_back(r.detail.is_null() ? Json::object() : r.detail);
    trial_ms.push_back(r.ms);
  }
  return {{"tool", "maskident"},
          {"version", std::string(kVersion)},
          {"config", report.config},
          {"aggregate", aggregate_rows(rows)},
          {"all_passed", report.all_passed()},
          {"rows", rows},
          {"details", details},
          {"timing", {{"total_ms", report.total_ms}, {"trial_ms", trial_ms}}}};
}

std::string report_to_csv(const BatchReport& report) {
  std::string out = "trial,seed,method,err_primary,err_transition,residual,ms,pass\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.trial) + "," + std::to_string(r.seed) + "," + r.method + "," + format_real(r.err_primary) +
           "," + format_real(r.err_transition) + "," + format_real(r.residual) + "," + format_real(r.ms) + "," +
           (r.pass ? "true" : "false") + "\n";
  }
  return out;
}

void emit_reports(const BatchReport& report, const std::string& json_path, const std::string& csv_path) {
  const auto write = [](const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw Error(ErrorKind::Io, "failed writing '" + path + "'");
  };
  if (!json_path.empty()) write(json_path, report_to_json(report).dump(2) + "\n");
  if (!csv_path.empty()) write(csv_path, report_to_csv(report));
}

int exit_code(const BatchReport& report) { return report.all_passed() ? 0 : 1; }

}  // namespace maskident
