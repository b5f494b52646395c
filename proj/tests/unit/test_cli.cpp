#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "helpers.hpp"

#ifdef FAIRPART_CLI_PATH

namespace {

using fairpart::fixtures::read_file;
using fairpart::fixtures::TempDir;
using fairpart::fixtures::write_file;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(const std::string& args, const TempDir& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("'") + FAIRPART_CLI_PATH + "' " +
                          args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(out), read_file(err)};
}

const char* kSingleGroup = R"({
  "population": {"mixture": {"groups": [{"prior": 1.0, "uniform": [0, 0, 1, 1]}]}},
  "facilities": [[0.25, 0.25], [0.75, 0.75], [0.25, 0.75]],
  "solver": {"iterations": 2000, "eval_samples": 2000, "trace_samples": 200},
  "output": "out"
})";

const char* kTwoGroups = R"({
  "population": {"mixture": {"groups": [
    {"prior": 0.5, "components": [{"weight": 1, "mean": [0.3, 0.3], "cov": 0.02}]},
    {"prior": 0.5, "components": [{"weight": 1, "mean": [0.7, 0.6], "cov": 0.03}]}
  ]}},
  "facilities": [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]],
  "solver": {"iterations": 5000, "eval_samples": 5000, "trace_samples": 500},
  "output": "out",
  "seed": 4
})";

std::string data(const std::string& rel) { return std::string(FAIRPART_DATA_DIR) + "/" + rel; }

}  // namespace

TEST(Cli, SingleGroupGivesZeroWeights) {
  TempDir dir;
  write_file(dir / "run.json", kSingleGroup);
  const auto r = cli("solve -c '" + (dir / "run.json").string() + "'", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto w = nlohmann::json::parse(read_file(dir / "out" / "weights.json"));
  for (const auto& row : w["w"])
    for (const auto& v : row) EXPECT_EQ(v.get<double>(), 0.0);
  for (const char* f : {"trace.csv", "report.json", "config.resolved.json", "cdf_group_1.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / f)) << f;
}

TEST(Cli, SameSeedSameFiles) {
  TempDir dir;
  write_file(dir / "run.json", kTwoGroups);
  const auto config = "'" + (dir / "run.json").string() + "'";
  ASSERT_EQ(cli("solve -c " + config + " --set output=a", dir).code, 0);
  ASSERT_EQ(cli("--workers 2 solve -c " + config + " --set output=b", dir).code, 0);
  for (const char* f : {"weights.json", "trace.csv", "report.json", "cdf_group_2.csv"})
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
  ASSERT_EQ(cli("solve -c " + config + " --set output=c --set seed=5", dir).code, 0);
  EXPECT_NE(read_file(dir / "a" / "weights.json"), read_file(dir / "c" / "weights.json"));
}

TEST(Cli, InvalidSizesAreConfigErrors) {
  TempDir dir;
  write_file(dir / "run.json", kTwoGroups);
  const auto r = cli("solve -c '" + (dir / "run.json").string() +
                         "' --set solver.mode=fixed_p --set 'solver.p=[0.3,0.3,0.3,0.3]'",
                     dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("solver.p"), std::string::npos) << r.err;
}

TEST(Cli, UsageAndConfigErrors) {
  TempDir dir;
  write_file(dir / "run.json", kTwoGroups);
  EXPECT_EQ(cli("solve", dir).code, 1);
  EXPECT_EQ(cli("frobnicate", dir).code, 1);
  EXPECT_EQ(cli("solve -c '" + (dir / "missing.json").string() + "'", dir).code, 2);
  const auto r = cli("solve -c '" + (dir / "run.json").string() + "' --set solver.bogus=1", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("solver.bogus"), std::string::npos);
}

TEST(Cli, BaselineKeepsEveryFacilityOpen) {
  TempDir dir;
  write_file(dir / "run.json", R"({
    "population": {"mixture": {"groups": [{"prior": 0.5, "uniform": [0, 0, 1, 1]},
                                          {"prior": 0.5, "uniform": [0, 0, 1, 1]}]}},
    "facilities": [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]],
    "solver": {"eval_samples": 100000},
    "output": "out"})");
  ASSERT_EQ(cli("baseline -c '" + (dir / "run.json").string() + "'", dir).code, 0);
  const auto report = nlohmann::json::parse(read_file(dir / "out" / "baseline" / "report.json"));
  for (const auto& p : report["p_hat"]) EXPECT_NEAR(p.get<double>(), 0.25, 0.01);
}

TEST(Cli, EvaluateGridAndCompare) {
  TempDir dir;
  write_file(dir / "run.json", kTwoGroups);
  const auto config = "-c '" + (dir / "run.json").string() + "'";
  ASSERT_EQ(cli("solve " + config, dir).code, 0);
  ASSERT_EQ(cli("baseline " + config, dir).code, 0);
  const auto weights = (dir / "out" / "weights.json").string();
  ASSERT_EQ(cli("evaluate " + config + " -w '" + weights + "' -o '" + (dir / "ev").string() + "'", dir).code, 0);
  EXPECT_EQ(read_file(dir / "ev" / "report.json"), read_file(dir / "out" / "report.json"));

  const auto grid = (dir / "g.csv").string();
  ASSERT_EQ(cli("grid " + config + " -w '" + weights + "' -r 32 -o '" + grid + "'", dir).code, 0);
  const auto text = read_file(grid);
  EXPECT_EQ(text.substr(0, text.find('\n')), "nx,ny,xmin,ymin,xmax,ymax");
  EXPECT_EQ(cli("grid " + config + " -w '" + weights + "' -r 1", dir).code, 2);

  const auto r = cli("compare u='" + (dir / "out" / "baseline" / "report.json").string() + "' c='" +
                         (dir / "out" / "report.json").string() + "' -o '" + (dir / "cmp.csv").string() + "'",
                     dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cmp = read_file(dir / "cmp.csv");
  EXPECT_EQ(cmp.substr(0, cmp.find('\n')), "group,stat,u,c,pct_change_c");
}

TEST(Cli, MismatchedWeightsAreDataErrors) {
  TempDir dir;
  write_file(dir / "run.json", kTwoGroups);
  write_file(dir / "single.json", kSingleGroup);
  ASSERT_EQ(cli("solve -c '" + (dir / "single.json").string() + "'", dir).code, 0);
  const auto r = cli("evaluate -c '" + (dir / "run.json").string() + "' -w '" +
                         (dir / "out" / "weights.json").string() + "'",
                     dir);
  EXPECT_EQ(r.code, 3);
}

TEST(Cli, OracleOnBundledInstances) {
  TempDir dir;
  auto r = cli("oracle '" + data("instances/segregated2") + "' --iterations 50000", dir);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("lp objective: 0.5"), std::string::npos);
  r = cli("oracle '" + data("instances/single_group") + "' --iterations 20000", dir);
  EXPECT_EQ(r.code, 0) << r.out;
}

TEST(Cli, OracleRejectsCorruptedWeights) {
  TempDir dir;
  write_file(dir / "w.json", R"({"K": 2, "M": 2, "q": [0.5, 0.5], "mode": "optimal_p",
                                 "w": [[0, 0], [0, 0]], "seed": 1, "iterations": 0, "alpha": 1,
                                 "cost_kind": "euclidean"})");
  const auto r = cli("oracle '" + data("instances/segregated2") + "' --iterations 20000 -w '" +
                         (dir / "w.json").string() + "'",
                     dir);
  EXPECT_EQ(r.code, 5);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

#endif
