#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "maskident/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(MASKIDENT_CLI) + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  for (std::size_t n; (n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0;) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("maskident_cli_" + std::string(
                                             ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, Version) {
  const CliRun r = run("--version");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find(std::string(maskident::kVersion)), std::string::npos);
}

TEST_F(Cli, PassingRunExitsZero) {
  const std::string cfg = write("ok.json", R"({"command":"recover","generator":{"d":4,"k":3},"trials":3})");
  const CliRun r = run("recover --config " + cfg + " --out-json " + path("out.json") + " --out-csv " + path("out.csv"));
  EXPECT_EQ(r.status, 0);
  const auto j = maskident::Json::parse(slurp(path("out.json")));
  EXPECT_TRUE(j["all_passed"].get<bool>());
  EXPECT_EQ(j["rows"].size(), 3u);
  const std::string csv = slurp(path("out.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST_F(Cli, JsonGoesToStdoutWithoutPath) {
  const CliRun r = run("verify-fixtures");
  EXPECT_EQ(r.status, 0);
  EXPECT_TRUE(maskident::Json::parse(r.out)["all_passed"].get<bool>());
}

TEST_F(Cli, FailingRunExitsOne) {
  const std::string cfg = write("bad_angle.json", R"({"command":"counterexample","construction":"simplex_rotation",
      "parameters":{"theta":3.0},
      "model":{"kind":"hmm","d":3,"k":3,"emission":[[0.9,0.06,0.04],[0.04,0.9,0.06],[0.06,0.04,0.9]],
               "transition":[[0.8,0.1,0.1],[0.1,0.8,0.1],[0.1,0.1,0.8]]}})");
  EXPECT_EQ(run("counterexample --config " + cfg + " --out-json " + path("o.json")).status, 1);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(run("fly").status, 2);
  EXPECT_EQ(run("recover").status, 2);
  EXPECT_EQ(run("recover --config " + path("missing.json")).status, 2);
  EXPECT_EQ(run("recover --config " + write("junk.json", "{not json")).status, 2);
  EXPECT_EQ(run("recover --config " + write("unknown.json", R"({"command":"recover","generator":{"d":4,"k":2},"x":1})"))
                .status,
            2);
  EXPECT_EQ(run("predict --config " + write("mismatch.json", R"({"command":"recover","generator":{"d":4,"k":2}})"))
                .status,
            2);
  EXPECT_EQ(run("recover --bogus-flag").status, 2);
}

TEST_F(Cli, SeedOverride) {
  const std::string cfg = write("seeded.json", R"({"command":"recover","generator":{"d":4,"k":3},"seed":1})");
  ASSERT_EQ(run("recover --config " + cfg + " --seed 99 --out-json " + path("s.json")).status, 0);
  const auto j = maskident::Json::parse(slurp(path("s.json")));
  EXPECT_EQ(j["config"]["seed"], 99);
  EXPECT_EQ(j["rows"][0]["seed"], maskident::stream_seed(99, 0));
}
