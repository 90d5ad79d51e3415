#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "maskident/serialization.hpp"

namespace maskident {

inline constexpr std::string_view kVersion = MASKIDENT_VERSION;

enum class Command { Predict, Recover, Counterexample, KruskalRank, VerifyFixtures };

std::string_view to_string(Command command);
/// Throws Error{Config} listing the five commands.
Command parse_command(std::string_view name, const std::string& where = "config.command");

struct GeneratorSpec {
  std::string kind = "hmm";  // "hmm" or "ghmm"
  Index d = 0;
  Index k = 0;
  std::optional<std::uint64_t> seed;  // falls back to the config seed
  bool symmetric = false;
  double condition_floor = kDefaultConditionFloor;
};

struct Tolerances {
  double error = 1e-6;         // recovery errors
  double discrepancy = 1e-8;   // counterexample predictor equality
  double distinctness = 1e-3;  // counterexample parameter distance
  double structure = 1e-12;    // simplex-rotation base structure
  double params = 1e-6;        // parameter validation inside counterexample checks
};

struct ExperimentConfig {
  Command command = Command::Recover;
  std::optional<ModelParams> model;
  std::optional<GeneratorSpec> generator;
  std::optional<MaskedTask> task;
  std::string method;
  Index trials = 1;
  std::uint64_t seed = 0;
  Tolerances tolerances;
  Json inputs;
  std::string construction;
  Json parameters = Json::object();
  std::optional<Matrix> matrix;
  std::string out_json;
  std::string out_csv;
  /// Normalised configuration with every default filled in.
  Json echo;
};

/// Strict parse: unknown keys, wrong types and missing fields raise
/// Error{Config} with a path-qualified message. A string "model" is read as
/// a JSON file path at parse time.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

struct TrialRow {
  Index trial = 0;
  std::uint64_t seed = 0;
  std::string method;
  std::optional<double> err_primary;
  std::optional<double> err_transition;
  std::optional<double> residual;
  double ms = 0.0;
  bool pass = false;
  std::string error;  // set when the trial threw
  Json detail;
};

struct BatchReport {
  std::vector<TrialRow> rows;  // trial order
  Json config;
  double total_ms = 0.0;

  bool all_passed() const;
  /// trials, passed, failed and max/median of each error column.
  Json aggregate() const;
};

/// Trial i runs with seed stream_seed(config.seed, i); generated instances
/// use stream_seed(generator.seed or config.seed, i). Trials run on up to
/// MASKIDENT_THREADS workers; a throwing trial becomes a failed row.
BatchReport run_batch(const ExperimentConfig& config);

/// Timing lives only under the "timing" key.
Json report_to_json(const BatchReport& report);
/// Fixed columns trial,seed,method,err_primary,err_transition,residual,ms,pass.
std::string report_to_csv(const BatchReport& report);
/// Empty paths are skipped. Throws Error{Io} naming the path.
void emit_reports(const BatchReport& report, const std::string& json_path, const std::string& csv_path);

/// Recomputes the aggregate block from the "rows" array of a report JSON.
Json aggregate_rows(const Json& rows);

/// 0 when every trial passed, 1 otherwise.
int exit_code(const BatchReport& report);

/// Worker count for a batch: MASKIDENT_THREADS when set, else hardware
/// concurrency, never more than the trial count.
unsigned worker_count(Index trials);

}  // namespace maskident
