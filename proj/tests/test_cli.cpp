// Copyright 2026 The pttkit authors
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

#include <cstdlib>
#include <filesystem>
#include <fstream>

#ifndef PTTKIT_CLI_PATH
#define PTTKIT_CLI_PATH "pttkit"
#endif

namespace {

namespace fs = std::filesystem;

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "pttkit_cli_test";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(PTTKIT_CLI_PATH) + " " + args + " > " +
                          (work_dir() / "stdout.txt").string() + " 2>" +
                          (work_dir() / "stderr.txt").string();
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string stdout_text() { return read_file(work_dir() / "stdout.txt"); }

void write_config(const fs::path& p, const std::string& body) {
  std::ofstream f(p);
  f << body;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("simulate --no-such-flag"), 2);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, SchemaViolationNamesField) {
  const auto cfg = work_dir() / "bad.json";
  write_config(cfg, R"({"n_qubits": 1, "n_steps": 2, "bath": {"kind": "warp-core"}})");
  EXPECT_EQ(run("simulate --config " + cfg.string() + " --out " +
                (work_dir() / "x.json").string()),
            2);
  EXPECT_NE(read_file(work_dir() / "stderr.txt").find("bath.kind"), std::string::npos);
}

TEST(Cli, PipelineSmoke) {
  const auto dir = work_dir();
  const auto cfg = dir / "sim.json";
  write_config(cfg, R"({
    "n_qubits": 1, "n_steps": 2, "seed": 7,
    "bath": {"kind": "exchange", "j_range": [0.3, 0.6]},
    "control": {"profile": "coherent_offset", "epsilon": 0.196},
    "n_train": 60, "n_validation": 15, "shots": 256})");
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir / "data.json").string()),
            0);
  ASSERT_TRUE(fs::exists(dir / "data.json"));

  // determinism: same config + seed gives byte-identical datasets
  ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir / "data2.json").string()),
            0);
  EXPECT_EQ(read_file(dir / "data.json"), read_file(dir / "data2.json"));

  const auto fitcfg = dir / "fit.json";
  write_config(fitcfg, R"({
    "chi_nu": 2, "chi_mu": 2, "lr": 0.01, "m_batch": 60, "m_causal": 30,
    "max_iters": 120, "val_every": 20, "convergence_tol": -1,
    "polish_iters": 60, "seed": 3})");
  ASSERT_EQ(run("fit --data " + (dir / "data.json").string() + " --config " +
                fitcfg.string() + " --out " + (dir / "model.bin").string() + " --trace " +
                (dir / "trace.csv").string()),
            0);
  ASSERT_TRUE(fs::exists(dir / "model.bin"));
  const std::string trace = read_file(dir / "trace.csv");
  EXPECT_NE(trace.find("iteration,objective,cross_entropy,causality_pen,tp_pen,"
                       "val_cross_entropy,seconds"),
            std::string::npos);

  ASSERT_EQ(run("validate --model " + (dir / "model.bin").string() + " --data " +
                (dir / "data.json").string()),
            0);
  EXPECT_NE(stdout_text().find("median Hellinger"), std::string::npos);
  // a tight threshold fails with exit 1
  EXPECT_EQ(run("validate --model " + (dir / "model.bin").string() + " --data " +
                (dir / "data.json").string() + " --max-median 1e-12"),
            1);

  ASSERT_EQ(run("predict --model " + (dir / "model.bin").string() + " --data " +
                (dir / "data.json").string() + " --out " + (dir / "pred.json").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "pred.json"));

  ASSERT_EQ(run("analyze-mi --model " + (dir / "model.bin").string() + " --out " +
                (dir / "mi").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "mi.json"));
  EXPECT_TRUE(fs::exists(dir / "mi.csv"));
  EXPECT_TRUE(fs::exists(dir / "mi.txt"));

  ASSERT_EQ(run("optimize-dd --model " + (dir / "model.bin").string() + " --window 2 --out " +
                (dir / "dd.json").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "dd.json"));
}

TEST(Cli, GradcheckPrintsError) {
  ASSERT_EQ(run("gradcheck --n 1 --k 2 --chi 2"), 0);
  EXPECT_NE(stdout_text().find("max relative error"), std::string::npos);
}

TEST(Cli, GstToy) {
  ASSERT_EQ(run("gst-toy"), 0);
  EXPECT_NE(stdout_text().find("max prediction error"), std::string::npos);
  ASSERT_EQ(run("gst-toy --depolarising 0.1"), 0);
}
