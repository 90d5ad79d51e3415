#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "maskident/error.hpp"
#include "maskident/experiment.hpp"

using namespace maskident;

namespace {

std::string error_message(std::string_view text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
    return e.what();
  }
  ADD_FAILURE() << "config accepted: " << text;
  return {};
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

Json without_timing(Json j) {
  j.erase("timing");
  return j;
}

class SingleWorker : public ::testing::Test {
 protected:
  void SetUp() override { setenv("MASKIDENT_THREADS", "1", 1); }
  void TearDown() override { unsetenv("MASKIDENT_THREADS"); }
};

}  // namespace

// -----------------------------------------------------------------------------
// Parsing

TEST(ParseConfig, RecoverExample) {
  const ExperimentConfig c = parse_config(
      R"({"command":"recover","generator":{"d":5,"k":3,"seed":7},"task":"x2x3|x1","method":"jennrich"})");
  EXPECT_EQ(c.command, Command::Recover);
  ASSERT_TRUE(c.generator);
  EXPECT_EQ(c.generator->d, 5);
  EXPECT_EQ(c.generator->k, 3);
  EXPECT_EQ(*c.generator->seed, 7u);
  EXPECT_EQ(c.task->to_string(), "x2x3|x1");
  EXPECT_EQ(c.trials, 1);
  EXPECT_EQ(c.tolerances.error, 1e-6);
}

TEST(ParseConfig, UnknownCommandListsAllFive) {
  const std::string msg = error_message(R"({"command":"fly"})");
  EXPECT_NE(msg.find("config.command"), std::string::npos);
  for (const char* name : {"predict", "recover", "counterexample", "kruskal-rank", "verify-fixtures"})
    EXPECT_NE(msg.find(name), std::string::npos) << name;
}

TEST(ParseConfig, DefaultSeedIsEchoed) {
  const ExperimentConfig c = parse_config(R"({"command":"recover","generator":{"d":4,"k":2}})");
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.echo["seed"], 0);
  EXPECT_EQ(c.echo["trials"], 1);
  EXPECT_EQ(c.echo["method"], "jennrich");
  EXPECT_EQ(c.echo["task"], "x2x3|x1");
  EXPECT_EQ(c.echo["tolerances"]["error"], 1e-6);
}

TEST(ParseConfig, MethodDefaultsTask) {
  EXPECT_EQ(parse_config(R"({"command":"recover","generator":{"d":4,"k":3},"method":"joint"})").task->to_string(),
            "x3|x1x2");
  EXPECT_EQ(parse_config(R"({"command":"recover","generator":{"kind":"ghmm","d":4,"k":3},"method":"far_field"})")
                .task->to_string(),
            "x2|x1");
}

TEST(ParseConfig, StrictErrors) {
  EXPECT_NE(error_message(R"({"command":"recover","generator":{"d":4,"k":2},"colour":1})").find("config.colour"),
            std::string::npos);
  EXPECT_NE(error_message(R"({"command":"recover","generator":{"d":4,"k":2,"q":1}})").find("config.generator.q"),
            std::string::npos);
  EXPECT_NE(error_message(R"({"command":"recover","generator":{"d":4}})").find("config.generator.k"),
            std::string::npos);
  EXPECT_NE(error_message(R"({"command":"recover"})").find("config.model"), std::string::npos);
  EXPECT_NE(error_message(R"({"command":"recover","generator":{"d":4,"k":2},"trials":0})").find("config.trials"),
            std::string::npos);
  EXPECT_NE(error_message(R"({"command":"recover","generator":{"d":4,"k":2},"tolerances":{"error":-1}})")
                .find("config.tolerances.error"),
            std::string::npos);
  EXPECT_NE(error_message(R"({"command":"recover","generator":{"d":4,"k":2},"method":"far_field"})")
                .find("config.method"),
            std::string::npos);
  EXPECT_NE(error_message(R"({"command":"recover",)").find("malformed JSON"), std::string::npos);
  EXPECT_NE(error_message(R"({"trials":2})").find("config.command"), std::string::npos);
  EXPECT_NE(error_message(R"({"command":"recover","model":"/nonexistent/model.json"})").find("/nonexistent"),
            std::string::npos);
  EXPECT_NE(error_message(R"({"command":"counterexample","construction":"simplex_rotation"})")
                .find("config.parameters.theta"),
            std::string::npos);
  EXPECT_NE(error_message(R"({"command":"predict","generator":{"d":4,"k":2},"task":"x3x4|x1x2","inputs":[[0,1]]})")
                .find("closest supported task"),
            std::string::npos);
}

TEST(ParseConfig, InlineModel) {
  const ExperimentConfig c = parse_config(R"({"command":"predict","task":"x2|x1","inputs":[0,1],
      "model":{"kind":"hmm","d":2,"k":2,"emission":[[1,0],[0,1]],"transition":[[0.9,0.1],[0.1,0.9]]}})");
  ASSERT_TRUE(c.model);
  EXPECT_EQ(std::get<HmmParams>(*c.model).transition(0, 1), 0.1);
}

TEST(ParseConfig, ModelFile) {
  const auto path = std::filesystem::temp_directory_path() / "maskident_model_test.json";
  std::ofstream(path) << R"({"kind":"ghmm","d":2,"k":2,"means":[[1,0],[0,1]],"transition":[[0.7,0.3],[0.3,0.7]]})";
  const ExperimentConfig c = parse_config(R"({"command":"recover","method":"density","model":")" +
                                          path.string() + "\"}");
  EXPECT_TRUE(std::holds_alternative<GhmmParams>(*c.model));
  EXPECT_EQ(c.echo["model_path"], path.string());
  std::filesystem::remove(path);
}

// -----------------------------------------------------------------------------
// Batches

TEST_F(SingleWorker, RecoverBatchPasses) {
  const ExperimentConfig c =
      parse_config(R"({"command":"recover","generator":{"d":5,"k":3},"trials":100,"seed":11})");
  const BatchReport r = run_batch(c);
  ASSERT_EQ(r.rows.size(), 100u);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_EQ(r.rows[i].trial, static_cast<Index>(i));
    EXPECT_EQ(r.rows[i].seed, stream_seed(11, i));
    EXPECT_TRUE(r.rows[i].pass) << r.rows[i].error;
  }
  EXPECT_LE(r.aggregate()["max_err_transition"].get<double>(), 1e-6);
  EXPECT_EQ(exit_code(r), 0);
}

TEST(RunBatch, RowsAreOrderedAcrossWorkers) {
  setenv("MASKIDENT_THREADS", "4", 1);
  const ExperimentConfig c = parse_config(R"({"command":"recover","generator":{"d":4,"k":3},"trials":12})");
  const BatchReport parallel = run_batch(c);
  setenv("MASKIDENT_THREADS", "1", 1);
  const BatchReport serial = run_batch(c);
  unsetenv("MASKIDENT_THREADS");
  EXPECT_EQ(without_timing(report_to_json(parallel)).dump(), without_timing(report_to_json(serial)).dump());
}

TEST(RunBatch, WorkerCountHonoursEnvironment) {
  setenv("MASKIDENT_THREADS", "3", 1);
  EXPECT_EQ(worker_count(10), 3u);
  EXPECT_EQ(worker_count(2), 2u);
  unsetenv("MASKIDENT_THREADS");
}

TEST_F(SingleWorker, RerunIsByteIdenticalOutsideTiming) {
  const ExperimentConfig c = parse_config(
      R"({"command":"recover","generator":{"kind":"ghmm","d":4,"k":3},"method":"jennrich","trials":3,"seed":5})");
  const Json a = report_to_json(run_batch(c)), b = report_to_json(run_batch(c));
  EXPECT_TRUE(a.contains("timing"));
  EXPECT_EQ(without_timing(a).dump(2), without_timing(b).dump(2));
  EXPECT_EQ(a["version"], std::string(kVersion));
  EXPECT_EQ(a["tool"], "maskident");
}

TEST_F(SingleWorker, JsonRoundTripReproducesAggregate) {
  const ExperimentConfig c = parse_config(R"({"command":"recover","generator":{"d":4,"k":3},"trials":5})");
  const Json emitted = report_to_json(run_batch(c));
  const Json reparsed = Json::parse(emitted.dump(2));
  EXPECT_EQ(aggregate_rows(reparsed["rows"]), reparsed["aggregate"]);
  EXPECT_EQ(reparsed["aggregate"]["trials"], 5);
}

TEST_F(SingleWorker, CsvHasHeaderAndOneRowPerTrial) {
  const ExperimentConfig c = parse_config(R"({"command":"recover","generator":{"d":4,"k":3},"trials":4})");
  const BatchReport r = run_batch(c);
  const std::string csv = report_to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "trial,seed,method,err_primary,err_transition,residual,ms,pass");
  EXPECT_EQ(count_lines(csv), 5u);
  std::istringstream lines(csv);
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  EXPECT_EQ(first.rfind("0," + std::to_string(stream_seed(0, 0)) + ",jennrich,", 0), 0u);
  EXPECT_EQ(first.substr(first.size() - 4), "true");
}

TEST_F(SingleWorker, EmitWritesBothFiles) {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string json_path = (dir / "maskident_emit.json").string(), csv_path = (dir / "maskident_emit.csv").string();
  const BatchReport r = run_batch(parse_config(R"({"command":"verify-fixtures"})"));
  emit_reports(r, json_path, csv_path);
  std::ifstream json_in(json_path), csv_in(csv_path);
  const Json j = Json::parse(json_in);
  EXPECT_TRUE(j["all_passed"].get<bool>());
  std::stringstream csv;
  csv << csv_in.rdbuf();
  EXPECT_EQ(count_lines(csv.str()), 2u);
  std::filesystem::remove(json_path);
  std::filesystem::remove(csv_path);
  EXPECT_THROW(emit_reports(r, "/nonexistent-dir/x.json", ""), Error);
}

TEST_F(SingleWorker, InfeasibleAngleFailsOneRow) {
  const ExperimentConfig c = parse_config(
      R"({"command":"counterexample","construction":"simplex_rotation","parameters":{"theta":3.0},
          "model":{"kind":"hmm","d":3,"k":3,"emission":[[0.9,0.06,0.04],[0.04,0.9,0.06],[0.06,0.04,0.9]],
                   "transition":[[0.8,0.1,0.1],[0.1,0.8,0.1],[0.1,0.1,0.8]]}})");
  const BatchReport r = run_batch(c);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_FALSE(r.rows[0].pass);
  EXPECT_NE(r.rows[0].error.find("largest feasible angle"), std::string::npos);
  EXPECT_TRUE(r.rows[0].detail.contains("max_feasible_theta"));
  EXPECT_EQ(exit_code(r), 1);
}

TEST_F(SingleWorker, VerifyFixturesPasses) {
  const BatchReport r = run_batch(parse_config(R"({"command":"verify-fixtures"})"));
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_TRUE(r.rows[0].pass) << r.rows[0].detail.dump(2);
  EXPECT_EQ(r.rows[0].detail["checks"].size(), 6u + 9u * 5u);
}

TEST_F(SingleWorker, PredictCommand) {
  const BatchReport r = run_batch(parse_config(R"({"command":"predict","task":"x2|x1","inputs":[0,1],
      "model":{"kind":"hmm","d":2,"k":2,"emission":[[1,0],[0,1]],"transition":[[0.9,0.2],[0.1,0.8]]}})"));
  ASSERT_TRUE(r.rows[0].pass) << r.rows[0].error;
  const Json& out = r.rows[0].detail["outputs"];
  EXPECT_EQ(out[0], Json::parse("[[0.9],[0.1]]"));
  EXPECT_EQ(out[1], Json::parse("[[0.2],[0.8]]"));
}

TEST_F(SingleWorker, KruskalRankCommand) {
  const BatchReport r =
      run_batch(parse_config(R"({"command":"kruskal-rank","matrix":[[1,0,1],[0,1,0],[0,0,0]]})"));
  EXPECT_EQ(r.rows[0].detail["kruskal_rank"], 1);
  EXPECT_EQ(r.rows[0].detail["rank"], 2);
}

TEST_F(SingleWorker, CounterexampleConstructions) {
  for (const char* config :
       {R"({"command":"counterexample","construction":"fixture_pair","tolerances":{"discrepancy":1e-6}})",
        R"({"command":"counterexample","construction":"simplex_rotation","parameters":{"theta":0.05}})",
        R"({"command":"counterexample","construction":"power_rotation","parameters":{"t":5}})",
        R"({"command":"counterexample","construction":"power_rotation_gaussian","parameters":{"t":3}})",
        R"({"command":"counterexample","construction":"householder","generator":{"kind":"ghmm","d":4,"k":3},"trials":3})"}) {
    const BatchReport r = run_batch(parse_config(config));
    EXPECT_TRUE(r.all_passed()) << config << "\n" << report_to_json(r)["rows"].dump();
  }
}

TEST_F(SingleWorker, AllRecoverMethods) {
  for (const char* config :
       {R"({"command":"recover","generator":{"d":3,"k":3},"method":"eigen_pair","trials":3})",
        R"({"command":"recover","generator":{"d":4,"k":3},"method":"joint","trials":3})",
        R"({"command":"recover","generator":{"d":4,"k":3,"condition_floor":0.25},"method":"empirical_joint","tolerances":{"error":0.05}})",
        R"({"command":"recover","generator":{"kind":"ghmm","d":4,"k":3},"method":"far_field","tolerances":{"error":1e-4}})",
        R"({"command":"recover","generator":{"kind":"ghmm","d":4,"k":3},"method":"density","tolerances":{"error":1e-8},"trials":3})"}) {
    const BatchReport r = run_batch(parse_config(config));
    EXPECT_TRUE(r.all_passed()) << config << "\n" << report_to_json(r)["rows"].dump();
  }
}

TEST_F(SingleWorker, TrialErrorsBecomeFailedRows) {
  const BatchReport r = run_batch(
      parse_config(R"({"command":"recover","generator":{"d":4,"k":3},"task":"x3x5|x1","trials":2})"));
  ASSERT_EQ(r.rows.size(), 2u);
  for (const auto& row : r.rows) {
    EXPECT_FALSE(row.pass);
    EXPECT_NE(row.error.find("non-adjacent"), std::string::npos) << row.error;
  }
  EXPECT_EQ(r.aggregate()["failed"], 2);
}
