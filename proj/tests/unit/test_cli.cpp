// Copyright 2026 The divattn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "divattn/cli.hpp"
#include "divattn/config.hpp"
#include "tiny_config.hpp"

namespace divattn::cli {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

int run_args(std::vector<std::string> args) {
  args.insert(args.begin(), "divattn");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root = fs::temp_directory_path() / ("divattn_cli_" + std::string(info->name()) + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    config = (root / "tiny.cfg").string();
    std::ofstream(config) << to_config_text(divattn::testing::tiny_run_config());
  }
  void TearDown() override { fs::remove_all(root); }

  fs::path root;
  std::string config;
  std::ostringstream log;
};

TEST_F(CliTest, TrainWritesArtifactsDeterministically) {
  TrainCommand cmd{config, 4, (root / "a").string(), "full", false};
  ASSERT_EQ(cmd_train(cmd, log), kExitOk);
  for (const char* f : {"params.bin", "manifest.txt", "config.txt", "run.txt", "epoch_log.csv",
                        "metrics.csv"}) {
    EXPECT_TRUE(fs::exists(root / "a" / f)) << f;
  }
  EXPECT_EQ(first_line(root / "a" / "metrics.csv"), "run_id,stage,top1,top5,mAP");
  EXPECT_EQ(first_line(root / "a" / "epoch_log.csv"),
            "epoch,stage,lr,loss,xent,triplet,of,ow,train_top1");
  EXPECT_EQ(lines(root / "a" / "epoch_log.csv").size(), 5u);
  cmd.out = (root / "b").string();
  ASSERT_EQ(cmd_train(cmd, log), kExitOk);
  EXPECT_EQ(slurp(root / "a" / "metrics.csv"), slurp(root / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(root / "a" / "epoch_log.csv"), slurp(root / "b" / "epoch_log.csv"));
  EXPECT_EQ(slurp(root / "a" / "params.bin"), slurp(root / "b" / "params.bin"));
}

TEST_F(CliTest, ExistingRunNeedsForce) {
  const std::string out = (root / "r").string();
  EXPECT_EQ(run_args({"train", "--config", config, "--out", out, "--variant", "baseline"}), kExitOk);
  EXPECT_EQ(run_args({"train", "--config", config, "--out", out}), kExitUsage);
  EXPECT_EQ(run_args({"train", "--config", config, "--out", out, "--force"}), kExitOk);
}

TEST_F(CliTest, BadInputsExitWithUsageCode) {
  std::ofstream(root / "bad.cfg") << "bogus.key = 3\n";
  const std::string out = (root / "x").string();
  EXPECT_EQ(run_args({"train", "--config", (root / "bad.cfg").string(), "--out", out}), kExitUsage);
  EXPECT_EQ(run_args({"train", "--config", config, "--out", out, "--variant", "pam,nope"}),
            kExitUsage);
  EXPECT_EQ(run_args({"frobnicate"}), kExitUsage);
  EXPECT_EQ(run_args({"train"}), kExitUsage);
  EXPECT_FALSE(fs::exists(root / "x" / "run.txt"));
}

TEST_F(CliTest, AblateWritesSeedAndMeanRows) {
  AblateCommand cmd{config, {1, 2}, (root / "abl").string(), {"baseline", "pam,cam"}};
  ASSERT_EQ(cmd_ablate(cmd, log), kExitOk);
  const auto rows = lines(root / "abl" / "ablation.csv");
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0], "variant,seed,top1,top5,mAP");
  const auto map_of = [](const std::string& row) { return std::stod(row.substr(row.rfind(',') + 1)); };
  for (std::size_t v = 0; v < 2; ++v) {
    const std::string& mean = rows[1 + 3 * v + 2];
    EXPECT_NE(mean.find(",mean,"), std::string::npos) << mean;
    EXPECT_NEAR(map_of(mean), (map_of(rows[1 + 3 * v]) + map_of(rows[2 + 3 * v])) / 2.0, 1e-15);
  }
}

TEST_F(CliTest, DiagnoseOnFreshCheckpoint) {
  const std::string ckpt = (root / "ck").string();
  TrainCommand train{config, 2, ckpt, "pam,cam", false};
  ASSERT_EQ(cmd_train(train, log), kExitOk);
  DiagnoseCommand cmd{ckpt, (root / "diag").string()};
  ASSERT_EQ(cmd_diagnose(cmd, log), kExitOk);
  EXPECT_EQ(first_line(root / "diag" / "correlation.csv"),
            "variant,site,mean_offdiag,mean_full,constant_channels,samples");
  EXPECT_EQ(first_line(root / "diag" / "corr_hist.csv"), "site,bin_lo,bin_hi,count");
  EXPECT_EQ(first_line(root / "diag" / "condition.csv"),
            "site,matrices,median_condition,max_condition,infinite");
  EXPECT_EQ(lines(root / "diag" / "correlation.csv").size(), 4u);
}

TEST_F(CliTest, BenchWritesTable) {
  BenchCommand cmd;
  cmd.out = (root / "bench").string();
  cmd.sizes = {8};
  cmd.gaps = {1.5};
  cmd.iterations = {1, 5};
  ASSERT_EQ(cmd_bench_power_iteration(cmd, log), kExitOk);
  EXPECT_EQ(lines(root / "bench" / "bench_power_iteration.csv").size(), 3u);
}

TEST(CliFormatTest, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(3e-4), "3e-04");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(CliFormatTest, AblationGridHasNineVariants) {
  EXPECT_EQ(ablation_variants().size(), 9u);
  EXPECT_EQ(ablation_variants().front(), "baseline");
  EXPECT_EQ(ablation_variants().back(), "full");
}

}  // namespace
}  // namespace divattn::cli
