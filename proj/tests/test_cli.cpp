#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "qaf/checkpoint.hpp"
#include "qaf/dataset.hpp"
#include "qaf/io.hpp"
#include "qaf/run_config.hpp"
#include "support.hpp"

namespace qaf {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Small but complete run configuration rooted in a scratch directory.
class CliTest : public ::testing::Test {
 protected:
  CliTest() : dir_("cli") {
    RunConfig c;
    c.data_dir = (dir_ / "data").string();
    c.checkpoint_dir = (dir_ / "ckpt").string();
    c.report_dir = (dir_ / "reports").string();
    c.buses = {1, 2};
    c.n_per_bus = 12;
    c.n_target = 12;
    c.n_cal = 10;
    c.n_test = 6;
    c.n_loc = 4;
    c.generator.grid_step = 0.02;
    c.model.m = 32;
    c.model.token_size = 8;
    c.model.d = 4;
    c.model.p = 6;
    c.model.s = 4;
    c.model.fourier_m = 4;
    c.model.branch_hidden = {8};
    c.model.trunk_hidden = {8};
    c.model.head_hidden = {6};
    c.fed.total_rounds = 6;
    c.fed.k_local = 3;
    c.fed.batch_size = 16;
    c.finetune.max_epochs = 2;
    c.finetune.batch_size = 16;
    save_run_config(c, config_path());
    config_ = c;
  }

  fs::path config_path() const { return dir_ / "run.ini"; }

  Result run(std::vector<std::string> args) const {
    args.insert(args.begin(), {"--config", config_path().string()});
    return run_cli(std::move(args));
  }

  test::TempDir dir_;
  RunConfig config_;
};

TEST_F(CliTest, MissingSubcommandIsUsage) {
  EXPECT_EQ(run({}).code, cli::kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsage);
}

TEST_F(CliTest, ZeroTrajectoriesIsUsage) {
  const Result r = run({"gen-data", "--buses", "1", "--n-per-bus", "0"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, UnknownConfigKeyIsUsage) {
  EXPECT_EQ(run({"--set", "fed.bogus=1", "gen-data"}).code, cli::kUsage);
  std::ofstream(dir_ / "bad.ini") << "[fed]\nbogus=1\n";
  EXPECT_EQ(run_cli({"--config", (dir_ / "bad.ini").string(), "gen-data"}).code, cli::kUsage);
}

TEST_F(CliTest, GenDataIsDeterministicPerSeed) {
  const std::string a = (dir_ / "a").string(), b = (dir_ / "b").string(), c = (dir_ / "c").string();
  ASSERT_EQ(run({"gen-data", "--buses", "3", "--n-per-bus", "10", "--out", a}).code, cli::kOk);
  ASSERT_EQ(run({"gen-data", "--buses", "3", "--n-per-bus", "10", "--out", b}).code, cli::kOk);
  ASSERT_EQ(run({"--seed", "8", "gen-data", "--buses", "3", "--n-per-bus", "10", "--out", c}).code,
            cli::kOk);
  for (const char* leaf : {"bus3_train.traj", "bus3_train.data"}) {
    EXPECT_EQ(slurp(fs::path(a) / leaf), slurp(fs::path(b) / leaf)) << leaf;
    EXPECT_NE(slurp(fs::path(a) / leaf), slurp(fs::path(c) / leaf)) << leaf;
  }
}

TEST_F(CliTest, GenDataWritesOneDatasetPerBus) {
  const fs::path out = dir_ / "many";
  const Result r = run({"gen-data", "--buses", "1,2,3,4,5,6,7", "--n-per-bus", "1000", "--out",
                        out.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  for (int bus = 1; bus <= 7; ++bus) {
    const auto ds = load_dataset(out / ("bus" + std::to_string(bus) + "_train.data"));
    EXPECT_EQ(ds.inputs.size(), 1000u);
    EXPECT_EQ(ds.triplets.size(), 1000u * config_.n_loc);
  }
}

TEST_F(CliTest, PipelineEndToEnd) {
  const Result r = run({"pipeline"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  for (const char* stage : {"pretrained", "finetuned", "conformal"}) {
    const fs::path report = dir_ / "reports" / (std::string(stage) + "_report.csv");
    ASSERT_TRUE(fs::exists(report)) << stage;
    const std::string text = slurp(report);
    const auto lines = io::split(text, '\n');
    const auto footer = io::split(lines.back(), ',');
    ASSERT_EQ(footer.front(), "mean");
    const double picp = std::stod(std::string(footer[2]));
    EXPECT_GE(picp, 0.0);
    EXPECT_LE(picp, 1.0);
  }
  EXPECT_TRUE(fs::exists(dir_ / "reports" / "summary.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "ckpt" / "finetuned.cal"));
}

TEST_F(CliTest, StagesPersistResolvedConfig) {
  ASSERT_EQ(run({"--set", "fed.total_rounds=4", "pipeline"}).code, cli::kOk);
  const RunConfig back = load_run_config(dir_ / "ckpt" / "pretrained.config.ini");
  EXPECT_EQ(back.fed.total_rounds, 4u);
  EXPECT_TRUE(fs::exists(dir_ / "ckpt" / "finetuned.config.ini"));
  EXPECT_TRUE(fs::exists(dir_ / "data" / "gen-data.config.ini"));
}

TEST_F(CliTest, ExistingOutputNeedsForce) {
  const std::string out = (dir_ / "d").string();
  const std::vector<std::string> gen{"gen-data", "--buses", "1", "--n-per-bus", "5", "--out", out};
  ASSERT_EQ(run(gen).code, cli::kOk);
  const std::string first = slurp(fs::path(out) / "bus1_train.data");
  EXPECT_EQ(run(gen).code, cli::kArtifact);
  std::vector<std::string> forced = gen;
  forced.insert(forced.begin(), "--force-overwrite");
  ASSERT_EQ(run(forced).code, cli::kOk);
  EXPECT_EQ(slurp(fs::path(out) / "bus1_train.data"), first);
}

TEST_F(CliTest, ConfigFromEnvironment) {
  const fs::path out = dir_ / "env";
  ::setenv("QAFDON_CONFIG", config_path().c_str(), 1);
  const Result r = run_cli({"gen-data", "--buses", "2", "--n-per-bus", "3", "--out", out.string()});
  ::unsetenv("QAFDON_CONFIG");
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(load_dataset(out / "bus2_train.data").triplets.size(), 3u * config_.n_loc);
}

TEST(CliSmoke, DefaultConfigThreeBuses) {
  test::TempDir dir("smoke");
  const Result r = run_cli({"--set", "paths.data_dir=" + (dir / "data").string(),
                            "--set", "paths.checkpoint_dir=" + (dir / "ckpt").string(),
                            "--set", "paths.report_dir=" + (dir / "reports").string(),
                            "--set", "data.buses=1,2,3", "--set", "data.n_per_bus=200", "pipeline"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const std::string text = slurp(dir / "reports" / "conformal_report.csv");
  const auto lines = io::split(text, '\n');
  const auto footer = io::split(lines.back(), ',');
  const double picp = std::stod(std::string(footer[2]));
  EXPECT_GE(picp, 0.0);
  EXPECT_LE(picp, 1.0);
}

class CliArtifacts : public CliTest {
 protected:
  void SetUp() override { ASSERT_EQ(run({"pipeline"}).code, cli::kOk); }
  std::string ckpt(const std::string& leaf) const { return (dir_ / "ckpt" / leaf).string(); }
  std::string data(const std::string& leaf) const { return (dir_ / "data" / leaf).string(); }
};

TEST_F(CliArtifacts, TooFewCalibrationScoresIsCalibrationError) {
  const Result r = run({"--set", "run.alpha=0.001", "calibrate", "--model", ckpt("finetuned.ckpt"),
                        "--data", data("bus18_cal.data"), "--out", ckpt("x.cal")});
  EXPECT_EQ(r.code, cli::kCalibration);
  EXPECT_NE(r.err.find("minimum calibration size"), std::string::npos);
}

TEST_F(CliArtifacts, CalibratedEvaluationNeedsCalibrationFile) {
  const Result r = run({"evaluate", "--model", ckpt("pretrained.ckpt"), "--calibrated",
                        "--trajectories", data("bus18_test.traj"), "--out",
                        (dir_ / "e.csv").string()});
  EXPECT_EQ(r.code, cli::kArtifact);
}

TEST_F(CliArtifacts, CalibrationForAnotherModelIsRejected) {
  const Result r = run({"evaluate", "--model", ckpt("pretrained.ckpt"), "--calibration",
                        ckpt("finetuned.cal"), "--trajectories", data("bus18_test.traj"), "--out",
                        (dir_ / "e.csv").string()});
  EXPECT_EQ(r.code, cli::kArtifact);
}

TEST_F(CliArtifacts, CorruptDatasetIsDataError) {
  const fs::path bad = dir_ / "bad.data";
  std::string text = slurp(data("bus18_cal.data"));
  text.resize(text.size() / 2);
  std::ofstream(bad, std::ios::binary) << text;
  const Result r = run({"calibrate", "--model", ckpt("finetuned.ckpt"), "--data", bad.string(),
                        "--out", ckpt("y.cal")});
  EXPECT_EQ(r.code, cli::kData);
}

TEST_F(CliArtifacts, PredictWritesIntervalCurve) {
  const fs::path obs = dir_ / "obs.txt";
  ASSERT_EQ(run({"observe", "--trajectories", data("bus18_test.traj"), "--index", "0", "--out",
                 obs.string()})
                .code,
            cli::kOk);
  const Result r = run({"predict", "--model", ckpt("finetuned.ckpt"), "--calibration",
                        ckpt("finetuned.cal"), "--observed", obs.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("# calibrated 1"), std::string::npos);
  std::size_t rows = 0;
  for (const auto& line : io::split(r.out, '\n')) {
    if (line.empty() || line[0] == '#' || line.rfind("t,", 0) == 0) continue;
    const auto f = io::split(line, ',');
    ASSERT_EQ(f.size(), 5u);
    EXPECT_LE(std::stod(std::string(f[3])), std::stod(std::string(f[4])));
    ++rows;
  }
  EXPECT_GT(rows, 0u);
}

}  // namespace
}  // namespace qaf
