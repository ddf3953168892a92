#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rfdepth/tabular.hpp"
#include "test_support.hpp"

using testing_support::TempDir;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(RFDEPTH_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("no-such-command"), 1);
  EXPECT_EQ(run("synth --snr 1"), 1);                        // missing --out-train
  EXPECT_EQ(run("synth --snr 1 --out-train x --bogus 3"), 1);  // unknown flag
  EXPECT_EQ(run("sweep-depth --snr 1 --mtry 0 --reps 1"), 1);
  EXPECT_EQ(run("synth --snr 1 --setting galactic --out-train /dev/null"), 1);
}

TEST(Cli, DataErrorsExitTwo) {
  TempDir dir("cli_err");
  std::ofstream(dir.file("bad.csv")) << "x1,y\n1,2\n3\n";
  EXPECT_EQ(run("fit --train " + dir.file("bad.csv")), 2);
  std::ofstream(dir.file("ok.csv")) << "x1,y\n1,2\n3,4\n";
  EXPECT_EQ(run("fit --train " + dir.file("ok.csv") + " --mtry 1 --resample subsample:5"), 2);
}

TEST(Cli, SynthLowSettingShape) {
  TempDir dir("cli_synth");
  ASSERT_EQ(run("synth --setting low --snr 2 --out-train " + dir.file("tr.csv") + " --out-test " +
                dir.file("te.csv")),
            0);
  const auto d = rfdepth::read_delimited(dir.file("tr.csv"), rfdepth::Task::Regression);
  EXPECT_EQ(d.n(), 100u);
  EXPECT_EQ(d.p(), 10u);
  EXPECT_EQ(rfdepth::read_delimited(dir.file("te.csv"), rfdepth::Task::Regression).n(), 100u);
  ASSERT_EQ(run("synth --setting high-5 --snr 2 --out-train " + dir.file("h.csv")), 0);
  const auto h = rfdepth::read_delimited(dir.file("h.csv"), rfdepth::Task::Regression);
  EXPECT_EQ(h.n(), 50u);
  EXPECT_EQ(h.p(), 1000u);
  ASSERT_EQ(run("synth --setting low --snr 2 --out-train " + dir.file("tr2.csv")), 0);
  EXPECT_EQ(slurp(dir.file("tr.csv")), slurp(dir.file("tr2.csv")));
}

TEST(Cli, FitAndPredict) {
  TempDir dir("cli_fit");
  ASSERT_EQ(run("synth --snr 4 --n 60 --out-train " + dir.file("tr.csv") + " --out-test " +
                dir.file("te.csv")),
            0);
  ASSERT_EQ(run("fit --train " + dir.file("tr.csv") + " --test " + dir.file("te.csv") +
                " --trees 20 --out " + dir.file("fit.json")),
            0);
  const auto j = nlohmann::json::parse(slurp(dir.file("fit.json")));
  EXPECT_EQ(j["n"], 60);
  EXPECT_EQ(j["mtry"], 3);
  EXPECT_GT(j["train_loss"].get<double>(), 0.0);
  EXPECT_TRUE(j.contains("test_loss"));
  EXPECT_FALSE(j["interpolating"].get<bool>());
  ASSERT_EQ(run("predict --train " + dir.file("tr.csv") + " --query " + dir.file("te.csv") +
                " --trees 20 --out " + dir.file("pred.csv")),
            0);
  const std::string pred = slurp(dir.file("pred.csv"));
  EXPECT_EQ(pred.rfind("prediction\n", 0), 0u);
  EXPECT_EQ(line_count(pred), 61u);
}

TEST(Cli, SweepIsIdenticalAcrossThreadCounts) {
  TempDir dir("cli_sweep");
  const std::string base = "sweep-depth --setting low --snr 0.05,6 --reps 3 --trees 5 --maxnodes 2,unlimited --seed 7";
  ASSERT_EQ(run(base + " --threads 1 --out " + dir.file("a.csv")), 0);
  ASSERT_EQ(run(base + " --threads 8 --out " + dir.file("b.csv")), 0);
  const std::string a = slurp(dir.file("a.csv"));
  EXPECT_EQ(a, slurp(dir.file("b.csv")));
  const auto rows = rfdepth::parse_results_csv(a);
  ASSERT_EQ(rows.size(), 8u);  // 2 snr x 2 mtry x 2 maxnodes
  EXPECT_EQ(rows[0].mtry, 10u);
  EXPECT_EQ(rows[2].mtry, 3u);
  EXPECT_EQ(rows[1].maxnodes, 100u);
  EXPECT_EQ(rows[0].rep_count, 3u);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  TempDir dir("cli_cfg");
  std::ofstream(dir.file("run.toml")) << "[sweep-depth]\nsnr = \"1\"\nreps = 2\ntrees = 4\nmaxnodes = \"4\"\nmtry = \"bagging\"\n";
  ASSERT_EQ(run("--config " + dir.file("run.toml") + " sweep-depth --out " + dir.file("a.csv")), 0);
  auto rows = rfdepth::parse_results_csv(slurp(dir.file("a.csv")));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].rep_count, 2u);
  EXPECT_EQ(rows[0].n_trees, 4u);
  ASSERT_EQ(run("--config " + dir.file("run.toml") + " sweep-depth --reps 3 --out " + dir.file("b.csv")), 0);
  rows = rfdepth::parse_results_csv(slurp(dir.file("b.csv")));
  EXPECT_EQ(rows[0].rep_count, 3u);
}

TEST(Cli, TuneNodesizeWritesOptima) {
  TempDir dir("cli_tune");
  ASSERT_EQ(run("tune-nodesize --snr 1 --reps 2 --trees 5 --nodesize-grid 1,5,20 --test-size 50 --out " +
                dir.file("t.csv") + " --optima-out " + dir.file("o.csv")),
            0);
  EXPECT_EQ(rfdepth::parse_results_csv(slurp(dir.file("t.csv"))).size(), 3u);
  const std::string optima = slurp(dir.file("o.csv"));
  EXPECT_EQ(optima.rfind("rep,snr,optimal_nodesize\n", 0), 0u);
  EXPECT_EQ(line_count(optima), 3u);
}

TEST(Cli, DoubleDescentAndRandFS) {
  TempDir dir("cli_dd");
  ASSERT_EQ(run("double-descent --n 60 --p 6 --phase1 2,10,60 --phase2 1,5 --out " + dir.file("d.csv")), 0);
  const auto rows = rfdepth::parse_results_csv(slurp(dir.file("d.csv")));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].experiment, "double-descent-single");
  EXPECT_EQ(rows[4].experiment, "double-descent-forest");
  EXPECT_EQ(run("double-descent --n 60 --policy sideways"), 1);

  ASSERT_EQ(run("randfs --depth 3 --members 10 --out " + dir.file("r.json")), 0);
  const auto j = nlohmann::json::parse(slurp(dir.file("r.json")));
  EXPECT_EQ(j["coefficients"].size(), 10u);
  EXPECT_EQ(j["gamma"].size(), 10u);
  EXPECT_EQ(run("randfs --depth 11"), 2);

  ASSERT_EQ(run("sweep-depth --model randfs --snr 1 --reps 2 --trees 5 --maxnodes 1,5 --out " + dir.file("s.csv")), 0);
  EXPECT_EQ(rfdepth::parse_results_csv(slurp(dir.file("s.csv"))).size(), 2u);
}
