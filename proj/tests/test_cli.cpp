#include "cloudrm/analysis.hpp"
#include "cloudrm/cli.hpp"
#include "cloudrm/eval.hpp"
#include "cloudrm/imageio.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using cloudrm::cli::run_cli;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cloudrm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    cloudrm::io::save_gray(cloudrm::io::GrayImage(cloudrm::testing::ground_scene(32, 32)), dir_ / "g.pgm");
  }
  std::string p(const std::string& name) const { return (dir_ / name).string(); }
  CliRun simulate(const std::string& out, const std::string& seed = "3") {
    return cli({"simulate", "--input", p("g.pgm"), "--n", "5", "--out-dir", p(out), "--seed", seed,
                "--gamma", "2"});
  }
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, BoundsFullScale) {
  const auto r = cli({"bounds", "--d", "1048576", "--n", "7"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("lambda_min=3.691e-4\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("lambda_max_simplified=3.383e-3\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("lambda_star=6.801e-4\n"), std::string::npos) << r.out;
}

TEST_F(CliTest, BoundsWithStack) {
  ASSERT_EQ(simulate("s").code, 0);
  const auto r = cli({"bounds", "--d", "1024", "--n", "5", "--stack", p("s/stack.lrm")});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("lambda_max_data="), std::string::npos);
  EXPECT_NE(r.out.find("lambda_max_cheap="), std::string::npos);
  EXPECT_EQ(cli({"bounds", "--d", "5", "--n", "7"}).code, 2);
}

TEST_F(CliTest, SimulateWritesArtifactsDeterministically) {
  ASSERT_EQ(simulate("a").code, 0);
  ASSERT_EQ(simulate("b").code, 0);
  for (const char* f : {"observed_000.pgm", "observed_004.pgm", "cloud_000.pgm", "truth.pgm", "stack.lrm"})
    EXPECT_TRUE(fs::exists(dir_ / "a" / f)) << f;
  EXPECT_EQ(slurp(dir_ / "a/stack.lrm"), slurp(dir_ / "b/stack.lrm"));
  ASSERT_EQ(simulate("c", "4").code, 0);
  EXPECT_NE(slurp(dir_ / "a/stack.lrm"), slurp(dir_ / "c/stack.lrm"));
}

TEST_F(CliTest, RemoveAutoLambda) {
  ASSERT_EQ(simulate("s").code, 0);
  const auto r = cli({"remove", "--stack", p("s/stack.lrm"), "--method", "aatm", "--lambda", "auto",
                      "--out-dir", p("r"), "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"L.lrm", "C.lrm", "N.lrm", "recovered_000.pgm", "cloud_004.pgm", "run.json"})
    EXPECT_TRUE(fs::exists(dir_ / "r" / f)) << f;
  const auto j = nlohmann::json::parse(slurp(dir_ / "r/run.json"));
  EXPECT_EQ(j["method"], "aatm");
  EXPECT_DOUBLE_EQ(j["lambda"].get<double>(), cloudrm::analysis::lambda_star(1024, 5));
  for (const char* key : {"beta", "epsilon", "residual", "outer_iters", "wall_seconds", "converged", "seed"})
    EXPECT_TRUE(j.contains(key)) << key;

  const auto again = cli({"remove", "--stack", p("s/stack.lrm"), "--method", "aatm", "--out-dir", p("r2")});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(dir_ / "r/L.lrm"), slurp(dir_ / "r2/L.lrm"));
}

TEST_F(CliTest, RemoveFromImageDirectoryWithMcAndSplitHaze) {
  ASSERT_EQ(simulate("s").code, 0);
  const auto r = cli({"remove", "--stack", p("s"), "--method", "aatm", "--lambda", "default", "--mc",
                      "--split-haze", "--out-dir", p("r")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "r/B.lrm"));
  EXPECT_TRUE(fs::exists(dir_ / "r/haze_000.pgm"));
  const auto j = nlohmann::json::parse(slurp(dir_ / "r/run.json"));
  EXPECT_DOUBLE_EQ(j["lambda"].get<double>(), 1.0 / 32.0);
  EXPECT_TRUE(j.contains("mc"));
}

TEST_F(CliTest, UsageErrors) {
  ASSERT_EQ(simulate("s").code, 0);
  EXPECT_EQ(cli({"remove", "--stack", p("s/stack.lrm"), "--method", "foo", "--out-dir", p("r")}).code, 2);
  EXPECT_EQ(cli({"remove", "--stack", p("s/stack.lrm"), "--method", "rpca", "--lambda", "-1", "--out-dir",
                 p("r")}).code,
            2);
  EXPECT_EQ(cli({"bounds", "--d", "10"}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"bounds", "--d", "100", "--n", "4", "--bogus"}).code, 2);
  EXPECT_EQ(cli({"sweep", "--input", p("g.pgm"), "--n", "3", "--grid-count", "4", "--out", p("x.csv")}).code, 2);
}

TEST_F(CliTest, IoErrors) {
  EXPECT_EQ(cli({"remove", "--stack", p("none.lrm"), "--method", "rpca", "--out-dir", p("r")}).code, 3);
  std::ofstream(dir_ / "bad.pgm") << "P5 4 4 255\nxx";
  EXPECT_EQ(cli({"simulate", "--input", p("bad.pgm"), "--n", "2", "--out-dir", p("o")}).code, 3);
}

TEST_F(CliTest, StrictNonConvergence) {
  ASSERT_EQ(simulate("s").code, 0);
  const auto loose = cli({"remove", "--stack", p("s/stack.lrm"), "--method", "rpca", "--max-iters", "2",
                          "--out-dir", p("r")});
  EXPECT_EQ(loose.code, 0);
  EXPECT_NE(loose.err.find("warning"), std::string::npos);
  const auto strict = cli({"remove", "--stack", p("s/stack.lrm"), "--method", "rpca", "--max-iters", "2",
                           "--strict", "--out-dir", p("r")});
  EXPECT_EQ(strict.code, 4);
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  std::ofstream(dir_ / "cfg.json") << R"({"n": 4, "seed": 99, "gamma": 2.0, "equalize": false})";
  const auto r = cli({"simulate", "--config", p("cfg.json"), "--input", p("g.pgm"), "--out-dir", p("c"),
                      "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "c/observed_003.pgm"));
  EXPECT_FALSE(fs::exists(dir_ / "c/observed_004.pgm"));
  const auto meta = nlohmann::json::parse(slurp(dir_ / "c/stack.json"));
  EXPECT_EQ(meta["seed"], 3);
  EXPECT_EQ(meta["gamma"], 2.0);

  std::ofstream(dir_ / "bad.json") << R"({"colour": 1})";
  EXPECT_EQ(cli({"bounds", "--d", "100", "--n", "4", "--config", p("bad.json")}).code, 2);
  std::ofstream(dir_ / "broken.json") << "{";
  EXPECT_EQ(cli({"bounds", "--d", "100", "--n", "4", "--config", p("broken.json")}).code, 3);
}

TEST_F(CliTest, SweepWritesSchemaValidCsv) {
  const auto r = cli({"sweep", "--input", p("g.pgm"), "--n", "4", "--methods", "rpca,aatm+mc", "--grid-count",
                      "3", "--repeats", "2", "--seed", "1", "--out", p("sw/out.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = cloudrm::eval::read_report(dir_ / "sw/out.csv");
  EXPECT_EQ(rep.records.size(), 12u);
  EXPECT_TRUE(fs::exists(dir_ / "sw/out_aggregates.csv"));
  EXPECT_EQ(cli({"sweep", "--input", p("g.pgm"), "--n", "4", "--methods", "rpca,svd", "--out", p("x.csv")}).code,
            2);
}

TEST_F(CliTest, SweepDryRunAcceptsFullScaleParameters) {
  cloudrm::io::save_gray(cloudrm::io::GrayImage(cloudrm::testing::ground_scene(1024, 1024)), dir_ / "big.pgm");
  const auto r = cli({"sweep", "--input", p("big.pgm"), "--n", "7", "--methods", "rpca,atm,aatm,rpca+mc,aatm+mc",
                      "--grid-count", "51", "--repeats", "50", "--seed", "0", "--out", p("full.csv"), "--dry-run"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("records=12750"), std::string::npos) << r.out;
  EXPECT_EQ(slurp(dir_ / "full.csv"), "method,with_mc,lambda,repeat,r,seconds,converged\n");
}

TEST_F(CliTest, EvalPrintsPerImageAndIou) {
  ASSERT_EQ(simulate("s").code, 0);
  ASSERT_EQ(cli({"remove", "--stack", p("s/stack.lrm"), "--method", "aatm", "--out-dir", p("r")}).code, 0);
  const auto r = cli({"eval", "--recovered", p("r/L.lrm"), "--truth", p("s/truth.pgm"), "--cloud-est", p("r"),
                      "--cloud-true", p("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  int r_lines = 0;
  bool iou = false;
  for (std::string l; std::getline(lines, l);) {
    if (l.rfind("r=", 0) == 0) ++r_lines;
    if (l.rfind("iou=", 0) == 0) iou = true;
  }
  EXPECT_EQ(r_lines, 5);
  EXPECT_TRUE(iou);
  EXPECT_EQ(cli({"eval", "--recovered", p("r"), "--truth", p("s/truth.pgm"), "--cloud-est", p("r")}).code, 2);
}

TEST_F(CliTest, HelpExitsZero) { EXPECT_EQ(cli({"--help"}).code, 0); }
