#include "gridbroker/cli.hpp"

#include "gridbroker/centralized.hpp"

#include "scenarios.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gridbroker;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("gridbroker_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return cli::run(args, out_, err_);
  }

  std::string out(const std::string& sub) const { return (dir_ / sub).string(); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  EXPECT_TRUE(f) << p;
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const std::string kScenario = testutil::data_file("std399_like.json");

}  // namespace

TEST_F(CliTest, CentralizedWritesOutputsDeterministically) {
  ASSERT_EQ(run({"centralized", "--scenario", kScenario, "--out", out("a")}), cli::success) << err_.str();
  ASSERT_EQ(run({"centralized", "--scenario", kScenario, "--out", out("b")}), cli::success) << err_.str();
  for (const char* f : {"manifest.json", "dispatch.csv", "prices.csv", "summary.json"})
    EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
  EXPECT_EQ(slurp(dir_ / "a" / "dispatch.csv"), slurp(dir_ / "b" / "dispatch.csv"));
  const auto summary = read_json(dir_ / "a" / "summary.json");
  EXPECT_EQ(summary["status"], "optimal");
  EXPECT_NEAR(summary["objective"].get<double>(), solve_centralized(testutil::bundled()).total_cost, 1e-9);
  const auto manifest = read_json(dir_ / "a" / "manifest.json");
  EXPECT_EQ(manifest["command"], "centralized");
  EXPECT_TRUE(manifest.contains("version"));
  EXPECT_TRUE(manifest.contains("seed"));
}

TEST_F(CliTest, InfeasibleScenarioExitsTwo) {
  ScenarioSpec s = testutil::bundled();
  s.bus_load_profile *= 10;
  save_scenario(s, dir_ / "heavy.json");
  EXPECT_EQ(run({"centralized", "--scenario", out("heavy.json"), "--out", out("o")}), cli::infeasible);
  EXPECT_NE(err_.str().find("error"), std::string::npos);
}

TEST_F(CliTest, NegotiateMatchesCentralizedCost) {
  ASSERT_EQ(run({"negotiate", "--scenario", kScenario, "--protocol", "subgradient", "--out", out("n")}), cli::success)
      << err_.str() << out_.str();
  const auto summary = read_json(dir_ / "n" / "summary.json");
  EXPECT_EQ(summary["status"], "converged");
  const double central = solve_centralized(testutil::bundled()).total_cost;
  EXPECT_LE(std::abs(summary["cost"].get<double>() - central), 1e-3 * central);
  for (const char* f : {"trace.csv", "messages.jsonl", "dispatch.csv", "prices.csv"})
    EXPECT_TRUE(fs::exists(dir_ / "n" / f)) << f;
}

TEST_F(CliTest, NegotiateLubsReportsBounds) {
  ASSERT_EQ(run({"negotiate", "--scenario", kScenario, "--protocol", "lubs", "--out", out("n")}), cli::success)
      << err_.str();
  const auto summary = read_json(dir_ / "n" / "summary.json");
  EXPECT_LE(summary["lower_bound"].get<double>(), summary["upper_bound"].get<double>() + 1e-6);
}

TEST_F(CliTest, NonConvergenceExitsThree) {
  EXPECT_EQ(run({"negotiate", "--scenario", kScenario, "--protocol", "subgradient", "--set", "alpha=0.5",
                 "--max-iters", "100", "--out", out("n")}),
            cli::not_converged);
  const auto summary = read_json(dir_ / "n" / "summary.json");
  EXPECT_EQ(summary["status"], "iteration-limit");
  EXPECT_EQ(summary["iterations"], 100);
}

TEST_F(CliTest, InputErrorsExitOne) {
  EXPECT_EQ(run({"negotiate", "--scenario", out("missing.json"), "--protocol", "lubs", "--out", out("n")}),
            cli::input_error);
  EXPECT_FALSE(err_.str().empty());
  EXPECT_EQ(run({"negotiate", "--scenario", kScenario, "--protocol", "lubs", "--set", "bogus=1", "--out", out("n")}),
            cli::input_error);
  EXPECT_NE(err_.str().find("bogus"), std::string::npos);
  EXPECT_EQ(run({"negotiate", "--scenario", kScenario, "--protocol", "auction", "--out", out("n")}), cli::input_error);
  EXPECT_EQ(run({"negotiate", "--scenario", kScenario, "--protocol", "lubs", "--set", "alpha=-1", "--out", out("n")}),
            cli::input_error);
  EXPECT_EQ(run({"negotiate", "--protocol", "lubs"}), cli::input_error);
  EXPECT_EQ(run({"frobnicate"}), cli::input_error);
  EXPECT_EQ(run({"moving-horizon", "--scenario", kScenario, "--hours", "0", "--out", out("h")}), cli::input_error);
}

TEST_F(CliTest, SweepFlipsAtCriticalValues) {
  ASSERT_EQ(run({"duopoly-sweep", "--a1", "0.3", "--a2", "0.2", "--alpha", "0.2,0.24,0.28", "--out", out("a")}),
            cli::success)
      << err_.str();
  auto rows = read_csv(dir_ / "a" / "duopoly_sweep.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"a1", "a2", "kind", "step", "critical", "classification"}));
  EXPECT_EQ(rows[1][5], "converging");
  EXPECT_EQ(rows[2][5], "cycling");
  EXPECT_EQ(rows[3][5], "diverging");
  EXPECT_NEAR(std::stod(rows[1][4]), 0.24, 1e-12);

  ASSERT_EQ(run({"duopoly-sweep", "--a1", "0.3", "--a2", "0.2", "--sigma", "0.9,1.2,1.5", "--out", out("s")}),
            cli::success);
  rows = read_csv(dir_ / "s" / "duopoly_sweep.csv");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1][5], "converging");
  EXPECT_EQ(rows[2][5], "cycling");
  EXPECT_EQ(rows[3][5], "diverging");
  EXPECT_NEAR(std::stod(rows[1][4]), 1.2, 1e-12);
}

TEST_F(CliTest, SweepRelativeStepsAndSwapSymmetry) {
  ASSERT_EQ(run({"duopoly-sweep", "--a1", "0.1:0.5:3", "--a2", "0.2,0.7", "--alpha", "0.5,1.5", "--relative", "--out",
                 out("x")}),
            cli::success);
  ASSERT_EQ(run({"duopoly-sweep", "--a1", "0.2,0.7", "--a2", "0.1:0.5:3", "--alpha", "0.5,1.5", "--relative", "--out",
                 out("y")}),
            cli::success);
  const auto x = read_csv(dir_ / "x" / "duopoly_sweep.csv");
  const auto y = read_csv(dir_ / "y" / "duopoly_sweep.csv");
  ASSERT_EQ(x.size(), 13u);
  ASSERT_EQ(y.size(), 13u);
  for (std::size_t i = 1; i < x.size(); ++i) {
    EXPECT_EQ(x[i][5], std::stod(x[i][3]) < std::stod(x[i][4]) ? "converging" : "diverging");
    bool found = false;
    for (std::size_t j = 1; j < y.size(); ++j)
      if (y[j][0] == x[i][1] && y[j][1] == x[i][0] && std::abs(std::stod(y[j][3]) - std::stod(x[i][3])) < 1e-9) {
        found = true;
        EXPECT_EQ(y[j][5], x[i][5]);
        EXPECT_NEAR(std::stod(y[j][4]), std::stod(x[i][4]), 1e-12);
      }
    EXPECT_TRUE(found) << i;
  }
}

TEST_F(CliTest, SweepRejectsBadRanges) {
  EXPECT_EQ(run({"duopoly-sweep", "--a1", "0.3:0.1:4", "--a2", "0.2", "--alpha", "0.1", "--out", out("a")}),
            cli::input_error);
  EXPECT_EQ(run({"duopoly-sweep", "--a1", "0.3", "--a2", "0.2", "--alpha", "0.1", "--sigma", "1", "--out", out("a")}),
            cli::input_error);
  EXPECT_EQ(run({"duopoly-sweep", "--a1", "-0.3", "--a2", "0.2", "--alpha", "0.1", "--out", out("a")}),
            cli::input_error);
  EXPECT_EQ(run({"duopoly-sweep", "--a1", "0.3", "--a2", "x", "--alpha", "0.1", "--out", out("a")}), cli::input_error);
}

TEST_F(CliTest, SingleHourHorizonMatchesNegotiate) {
  for (const char* protocol : {"subgradient", "lubs"}) {
    ASSERT_EQ(run({"negotiate", "--scenario", kScenario, "--protocol", protocol, "--out", out("n")}), cli::success);
    ASSERT_EQ(run({"moving-horizon", "--scenario", kScenario, "--protocol", protocol, "--hours", "1", "--out",
                   out("h")}),
              cli::success)
        << err_.str();
    EXPECT_EQ(slurp(dir_ / "n" / "trace.csv"), slurp(dir_ / "h" / "hour_00_trace.csv")) << protocol;
    const auto summary = read_json(dir_ / "h" / "summary.json");
    EXPECT_EQ(summary["hours_completed"], 1);
    EXPECT_EQ(summary["failed"], false);
  }
}

TEST_F(CliTest, HorizonReproducibleWithSeed) {
  const std::vector<std::string> base = {"moving-horizon", "--scenario", kScenario, "--protocol", "lubs", "--hours", "3",
                                         "--seed", "11", "--set", "spread=0.03"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", out("a")});
  b.insert(b.end(), {"--out", out("b")});
  ASSERT_EQ(run(a), cli::success) << err_.str() << out_.str();
  ASSERT_EQ(run(b), cli::success);
  for (const char* f : {"realized.csv", "summary.json", "hour_00_trace.csv", "hour_02_trace.csv"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
}

TEST_F(CliTest, ReplayReproducesOutputs) {
  ASSERT_EQ(run({"negotiate", "--scenario", kScenario, "--protocol", "lubs", "--set", "sigma=0.9", "--out", out("a")}),
            cli::success);
  ASSERT_EQ(run({"replay", out("a") + "/manifest.json", "--out", out("b")}), cli::success) << err_.str();
  for (const char* f : {"trace.csv", "messages.jsonl", "dispatch.csv", "prices.csv", "summary.json"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  EXPECT_EQ(read_json(dir_ / "b" / "manifest.json")["overrides"]["sigma"], "0.9");
  EXPECT_EQ(run({"replay", out("nothing.json")}), cli::input_error);
}
