// maskident: run an experiment described by a JSON config.
//
//   maskident <command> --config <file.json> [--out-json p] [--out-csv p] [--seed n]
//
// Exit status: 0 all trials passed, 1 some trial failed, 2 configuration error.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "maskident/error.hpp"
#include "maskident/experiment.hpp"

int main(int argc, char** argv) {
  using namespace maskident;

  CLI::App app{"Masked-prediction identifiability laboratory"};
  app.set_version_flag("--version", std::string(kVersion));
  std::string command, config_path, out_json, out_csv;
  std::optional<std::uint64_t> seed;
  app.add_option("command", command, "predict | recover | counterexample | kruskal-rank | verify-fixtures")
      ->required();
  app.add_option("--config", config_path, "experiment configuration (JSON)");
  app.add_option("--out-json", out_json, "write the JSON report here instead of stdout");
  app.add_option("--out-csv", out_csv, "write the CSV rows here");
  app.add_option("--seed", seed, "override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  ExperimentConfig config;
  try {
    const Command requested = parse_command(command, "command");
    Json raw = Json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorKind::Config, "--config: cannot open '" + config_path + "'");
      try {
        raw = Json::parse(in);
      } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::Config, "config: malformed JSON: " + std::string(e.what()));
      }
    } else if (requested != Command::VerifyFixtures) {
      throw Error(ErrorKind::Config, "--config is required for " + command);
    }
    if (!raw.is_object()) throw Error(ErrorKind::Config, "config: expected an object");
    if (!raw.contains("command")) raw["command"] = command;
    else if (raw["command"] != command)
      throw Error(ErrorKind::Config, "config.command: '" + raw["command"].dump() + "' does not match '" + command + "'");
    if (seed) raw["seed"] = *seed;
    config = parse_config(raw.dump());
  } catch (const Error& e) {
    std::cerr << "maskident: " << e.what() << "\n";
    return 2;
  }
  if (!out_json.empty()) config.out_json = out_json;
  if (!out_csv.empty()) config.out_csv = out_csv;

  const BatchReport report = run_batch(config);
  try {
    emit_reports(report, config.out_json, config.out_csv);
  } catch (const Error& e) {
    std::cerr << "maskident: " << e.what() << "\n";
    return 2;
  }
  if (config.out_json.empty()) std::cout << report_to_json(report).dump(2) << "\n";
  const Json agg = report.aggregate();
  std::cerr << to_string(config.command) << ": " << agg["passed"] << "/" << agg["trials"] << " trials passed\n";
  return exit_code(report);
}
