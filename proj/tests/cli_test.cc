// Copyright 2026 The MOIT Authors.
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

#include "cli.h"

#include <gtest/gtest.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "moit/data.h"
#include "moit/model.h"

namespace moit::cli {
namespace {

namespace fs = std::filesystem;

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> Lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> Fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  return out;
}

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun Cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  CliRun r;
  r.code = RunCli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() /
          ("moit_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string P(const std::string& name) const { return (dir / name).string(); }

  // Small noisy dataset with a companion test split.
  void Generate() {
    const CliRun r = Cli({"generate", "--classes", "3", "--per-class", "30",
                       "--test-per-class", "10", "--dim", "4", "--noise", "sym",
                       "--rate", "0.3", "--seed", "5", "--out", P("d.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  std::vector<std::string> TrainArgs(const std::string& out) const {
    return {"train",          "--data",      P("d.csv"), "--out", out,
            "--epochs",       "3",           "--ssl-start", "1",  "--batch-size",
            "16",             "--hidden",    "16",       "--embed-dim", "8",
            "--proj-dim",     "8",           "--k",      "10",  "--memory-size",
            "64",             "--lr",        "0.02",     "--milestones", "",
            "--knn-k",        "20"};
  }

  void Train(const std::string& out) {
    const CliRun r = Cli(TrainArgs(out));
    ASSERT_EQ(r.code, 0) << r.err;
  }

  fs::path dir;
};

TEST(CompanionPathTest, Naming) {
  EXPECT_EQ(CompanionTestPath("a/d.csv"), "a/d.test.csv");
  EXPECT_EQ(CompanionTestPath("data"), "data.test");
}

TEST_F(CliTest, GenerateRowCount) {
  const CliRun r = Cli({"generate", "--classes", "5", "--per-class", "200",
                     "--dim", "16", "--noise", "sym", "--rate", "0.4", "--seed",
                     "7", "--out", P("d.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = Lines(ReadFile(P("d.csv")));
  ASSERT_EQ(lines.size(), 1001u);
  EXPECT_EQ(lines[0], "moitdata v1, 1000, 16, 5");
  const Dataset d = LoadDataset(P("d.csv"));
  EXPECT_GT(d.NoisyCount(), 300u);
  EXPECT_TRUE(fs::exists(P("d.test.csv")));
  EXPECT_TRUE(fs::exists(P("d.csv.config.txt")));
}

TEST_F(CliTest, GenerateRateZeroKeepsLabels) {
  ASSERT_EQ(Cli({"generate", "--rate", "0", "--out", P("d.csv")}).code, 0);
  const Dataset d = LoadDataset(P("d.csv"));
  EXPECT_EQ(d.y, d.y_clean);
  ASSERT_EQ(Cli({"generate", "--noise", "none", "--rate", "0.5", "--out",
                 P("n.csv")}).code,
            0);
  const Dataset n = LoadDataset(P("n.csv"));
  EXPECT_EQ(n.y, n.y_clean);
}

TEST_F(CliTest, GenerateAsymmetricFollowsGroups) {
  ASSERT_EQ(Cli({"generate", "--classes", "6", "--noise", "asym", "--rate",
                 "1", "--group-size", "3", "--out", P("a.csv")})
                .code,
            0);
  const Dataset d = LoadDataset(P("a.csv"));
  const std::vector<int> mapping = CircularGroupMapping(6, 3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d.y[i], mapping[d.y_clean[i]]);
  }
}

TEST_F(CliTest, GenerateIsByteIdentical) {
  const std::vector<std::string> base = {"generate", "--rate", "0.4", "--seed",
                                         "7", "--per-class", "20", "--out"};
  auto a = base;
  a.push_back(P("a.csv"));
  auto b = base;
  b.push_back(P("b.csv"));
  ASSERT_EQ(Cli(a).code, 0);
  ASSERT_EQ(Cli(b).code, 0);
  EXPECT_EQ(ReadFile(P("a.csv")), ReadFile(P("b.csv")));
  EXPECT_EQ(ReadFile(P("a.test.csv")), ReadFile(P("b.test.csv")));
}

TEST_F(CliTest, TrainWritesOutputs) {
  Generate();
  Train(P("run"));
  const auto metrics = Lines(ReadFile(P("run/metrics.csv")));
  ASSERT_EQ(metrics.size(), 4u);
  EXPECT_EQ(metrics[0],
            "epoch,lr,icl_loss,ssl_loss,test_acc,knn_acc,det_precision,"
            "det_recall,clean_size");
  EXPECT_EQ(Fields(metrics[1])[6], "nan");
  EXPECT_NE(Fields(metrics[2])[6], "nan");
  const std::string config = ReadFile(P("run/config.txt"));
  EXPECT_NE(config.find("epochs=3"), std::string::npos);
  EXPECT_NE(config.find("balance=median"), std::string::npos);
  EXPECT_NE(config.find("tau=0.1"), std::string::npos);
  EXPECT_NO_THROW(LoadCheckpoint(P("run/model.ckpt")));
  const auto det = Lines(ReadFile(P("run/detection.csv")));
  ASSERT_EQ(det.size(), 91u);
  EXPECT_EQ(det[0], "index,y,y_hat,d,selected,is_noisy_truth");
}

TEST_F(CliTest, TrainIsDeterministic) {
  Generate();
  Train(P("a"));
  Train(P("b"));
  EXPECT_EQ(ReadFile(P("a/metrics.csv")), ReadFile(P("b/metrics.csv")));
  EXPECT_EQ(ReadFile(P("a/model.ckpt")), ReadFile(P("b/model.ckpt")));
  EXPECT_EQ(ReadFile(P("a/detection.csv")), ReadFile(P("b/detection.csv")));
}

TEST_F(CliTest, TrainUnbalancedSelectsAgreeingSamples) {
  Generate();
  auto args = TrainArgs(P("run"));
  args.insert(args.end(), {"--balance", "none"});
  ASSERT_EQ(Cli(args).code, 0);
  for (const auto& line : Lines(ReadFile(P("run/detection.csv")))) {
    if (line.rfind("index", 0) == 0) continue;
    const auto f = Fields(line);
    EXPECT_EQ(f[4] == "1", f[1] == f[2]) << line;
  }
}

TEST_F(CliTest, TrainNoSslSkipsDetection) {
  Generate();
  auto args = TrainArgs(P("run"));
  args.push_back("--no-ssl");
  ASSERT_EQ(Cli(args).code, 0);
  const auto metrics = Lines(ReadFile(P("run/metrics.csv")));
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    EXPECT_EQ(Fields(metrics[i])[6], "nan");
  }
  EXPECT_TRUE(fs::exists(P("run/detection.csv")));
}

TEST_F(CliTest, FinetuneZeroEpochs) {
  Generate();
  Train(P("run"));
  const CliRun r = Cli({"finetune", "--data", P("d.csv"), "--checkpoint",
                     P("run/model.ckpt"), "--detection", P("run/detection.csv"),
                     "--out", P("ft"), "--epochs", "0", "--knn-k", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(Lines(ReadFile(P("ft/metrics.csv"))).size(), 1u);
  const ModelParams before = LoadCheckpoint(P("run/model.ckpt"));
  const ModelParams after = LoadCheckpoint(P("ft/model.ckpt"));
  EXPECT_EQ(before.encoder, after.encoder);
  EXPECT_EQ(before.projector, after.projector);
  EXPECT_NE(before.classifier, after.classifier);
  EXPECT_EQ(Fields(Lines(r.out).back()).size(), 2u);
}

TEST_F(CliTest, FinetuneBootstrapAtEndEqualsUnitDelta) {
  Generate();
  Train(P("run"));
  const std::vector<std::string> base = {
      "finetune",    "--data",  P("d.csv"), "--checkpoint", P("run/model.ckpt"),
      "--detection", P("run/detection.csv"), "--epochs", "2", "--knn-k", "20"};
  auto a = base;
  a.insert(a.end(), {"--bootstrap-start", "2", "--delta", "0.3", "--out", P("a")});
  auto b = base;
  b.insert(b.end(), {"--delta", "1", "--out", P("b")});
  auto c = base;
  c.insert(c.end(), {"--bootstrap-start", "2", "--delta", "0.3", "--out", P("c")});
  ASSERT_EQ(Cli(a).code, 0);
  ASSERT_EQ(Cli(b).code, 0);
  ASSERT_EQ(Cli(c).code, 0);
  EXPECT_EQ(ReadFile(P("a/metrics.csv")), ReadFile(P("b/metrics.csv")));
  EXPECT_EQ(ReadFile(P("a/model.ckpt")), ReadFile(P("b/model.ckpt")));
  EXPECT_EQ(ReadFile(P("a/metrics.csv")), ReadFile(P("c/metrics.csv")));
}

TEST_F(CliTest, EvalMatchesFinalMetricsRow) {
  Generate();
  Train(P("run"));
  const std::vector<std::string> args = {"eval", "--data", P("d.csv"),
                                         "--checkpoint", P("run/model.ckpt"),
                                         "--knn-k", "20"};
  const CliRun a = Cli(args);
  const CliRun b = Cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto printed = Fields(Lines(a.out).back());
  const auto last = Fields(Lines(ReadFile(P("run/metrics.csv"))).back());
  ASSERT_EQ(printed.size(), 2u);
  EXPECT_NEAR(std::stod(printed[0]), std::stod(last[4]), 1e-9);
  EXPECT_NEAR(std::stod(printed[1]), std::stod(last[5]), 1e-9);
}

TEST_F(CliTest, EvalRejectsOversizedK) {
  Generate();
  Train(P("run"));
  const CliRun r = Cli({"eval", "--data", P("d.csv"), "--checkpoint",
                     P("run/model.ckpt"), "--knn-k", "91"});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, DetectWritesCsv) {
  Generate();
  Train(P("run"));
  const CliRun r = Cli({"detect", "--data", P("d.csv"), "--checkpoint",
                     P("run/model.ckpt"), "--out", P("det.csv"), "--k", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("clean_size="), std::string::npos);
  EXPECT_EQ(Lines(ReadFile(P("det.csv"))).size(), 91u);
}

TEST_F(CliTest, ExitCodes) {
  Generate();
  EXPECT_EQ(Cli({}).code, 2);
  EXPECT_EQ(Cli({"bogus"}).code, 2);
  EXPECT_EQ(Cli({"generate", "--classes", "x", "--out", P("z.csv")}).code, 2);
  EXPECT_EQ(Cli({"generate", "--noise", "odd", "--out", P("z.csv")}).code, 2);
  EXPECT_EQ(Cli({"generate", "--out", P("missing/dir/z.csv")}).code, 3);
  EXPECT_EQ(Cli({"train", "--data", P("nothere.csv"), "--out", P("r")}).code, 3);
  {
    std::ofstream bad(P("bad.csv"));
    bad << "moitdata v1, 2, 1, 2\n0.5,0,0\n";
  }
  EXPECT_EQ(Cli({"train", "--data", P("bad.csv"), "--out", P("r")}).code, 4);
  {
    std::ofstream junk(P("junk.ckpt"));
    junk << "not a checkpoint";
  }
  EXPECT_EQ(Cli({"eval", "--data", P("d.csv"), "--checkpoint", P("junk.ckpt")})
                .code,
            5);
  EXPECT_EQ(Cli({"eval", "--data", P("d.csv"), "--checkpoint", P("none.ckpt")})
                .code,
            5);
  EXPECT_EQ(Cli({"train", "--data", P("d.csv"), "--out", P("r"), "--balance",
                 "sideways"})
                .code,
            2);
  EXPECT_EQ(Cli({"generate", "--help"}).code, 0);
}

TEST_F(CliTest, ConfigFileAndOverrides) {
  {
    std::ofstream cfg(P("gen.cfg"));
    cfg << "# small set\nclasses=4\nper-class=10\n\ntest-per-class=0\n";
  }
  ASSERT_EQ(Cli({"generate", "--config", P("gen.cfg"), "--out", P("a.csv")}).code,
            0);
  EXPECT_EQ(LoadDataset(P("a.csv")).size(), 40u);
  EXPECT_FALSE(fs::exists(P("a.test.csv")));
  ASSERT_EQ(Cli({"generate", "--config", P("gen.cfg"), "--per-class", "5",
                 "--out", P("b.csv")})
                .code,
            0);
  EXPECT_EQ(LoadDataset(P("b.csv")).size(), 20u);
  {
    std::ofstream cfg(P("unknown.cfg"));
    cfg << "colour=blue\n";
  }
  EXPECT_EQ(Cli({"generate", "--config", P("unknown.cfg"), "--out", P("c.csv")})
                .code,
            2);
  {
    std::ofstream cfg(P("broken.cfg"));
    cfg << "classes\n";
  }
  EXPECT_EQ(Cli({"generate", "--config", P("broken.cfg"), "--out", P("c.csv")})
                .code,
            2);
}

TEST_F(CliTest, ThreadsEnvironmentVariable) {
  Generate();
  Train(P("a"));
  ::setenv("MOIT_THREADS", "3", 1);
  Train(P("b"));
  ::setenv("MOIT_THREADS", "zero", 1);
  const int bad = Cli(TrainArgs(P("c"))).code;
  ::unsetenv("MOIT_THREADS");
  SetNumThreads(1);
  EXPECT_EQ(ReadFile(P("a/metrics.csv")), ReadFile(P("b/metrics.csv")));
  EXPECT_EQ(bad, 2);
}

}  // namespace
}  // namespace moit::cli
