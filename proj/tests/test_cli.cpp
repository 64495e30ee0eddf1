// Copyright 2026 The nmq Authors
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

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "nmq/cli.hpp"

namespace nmq {
namespace {

namespace fs = std::filesystem;
using namespace nmq::testing;

const std::string kTool = NMQ_TOOL;
const std::string kModels = NMQ_MODEL_DIR;

struct ToolRun {
  int code;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nmq_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  ToolRun run(const std::string& args, const std::string& env = "") {
    const fs::path log = dir_ / "log.txt";
    const std::string cmd = env + " " + kTool + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path write(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << content;
    return p;
  }

  std::string model(const std::string& name) const { return kModels + "/" + name; }

  fs::path dir_;
};

TEST_F(Cli, ValidateShippedModels) {
  for (const char* m : {"reference.json", "decoupled.json", "driven.json"}) {
    const ToolRun r = run("validate --model " + model(m));
    EXPECT_EQ(r.code, 0) << m << ": " << r.out;
  }
}

TEST_F(Cli, ValidateNamesTheBadOperator) {
  nlohmann::json j = cli::read_json_file(model("reference.json"));
  j["h_s"][0][1] = 1.0;
  const ToolRun r = run("validate --model " + write("bad.json", j.dump()).string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("H_s"), std::string::npos) << r.out;
}

TEST_F(Cli, MalformedInputIsAUsageError) {
  const std::string text = slurp(model("reference.json"));
  const ToolRun r = run("validate --model " + write("cut.json", text.substr(0, 80)).string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("cut.json:"), std::string::npos) << r.out;
  EXPECT_EQ(run("simulate").code, 2);
  EXPECT_EQ(run("simulate --model " + model("reference.json") + " --engine bogus").code, 2);
  EXPECT_EQ(run("simulate --model " + model("reference.json") + " --dt 0.3 --horizon 1").code, 2);
}

TEST_F(Cli, SimulateIsByteIdentical) {
  const std::string args = "simulate --model " + model("reference.json") +
                           " --horizon 0.2 --stride 10 --traj 2 --out ";
  ASSERT_EQ(run(args + (dir_ / "a").string()).code, 0);
  ASSERT_EQ(run(args + (dir_ / "b").string()).code, 0);
  for (const char* f : {"trajectory_0000.csv", "trajectory_0001.csv", "manifest.json"}) {
    const std::string a = slurp(dir_ / "a" / f);
    ASSERT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir_ / "b" / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "a" / "manifest.json"));
  EXPECT_EQ(manifest["trajectory_seeds"].size(), 2u);
  EXPECT_EQ(manifest["trajectory_seeds"][1].get<std::uint64_t>(), derive_seed(7, 1));
  EXPECT_EQ(manifest["rng"]["generator"], "xoshiro256**/splitmix64");
  EXPECT_TRUE(manifest.contains("config_hash"));

  // Header and row shape.
  std::istringstream csv(slurp(dir_ / "a" / "trajectory_0000.csv"));
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header.rfind("t,Y,rho_00_re", 0), 0u);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','),
            std::count(row.begin(), row.end(), ','));
}

TEST_F(Cli, SeedPrecedence) {
  const std::string base = "simulate --model " + model("reference.json") + " --horizon 0.01 --out ";
  ASSERT_EQ(run(base + (dir_ / "env").string(), "NMQ_SEED=99").code, 0);
  ASSERT_EQ(run(base + (dir_ / "flag").string() + " --seed 5", "NMQ_SEED=99").code, 0);
  const auto env = nlohmann::json::parse(slurp(dir_ / "env" / "manifest.json"));
  const auto flag = nlohmann::json::parse(slurp(dir_ / "flag" / "manifest.json"));
  EXPECT_EQ(env["config"]["seed"], 99);
  EXPECT_EQ(flag["config"]["seed"], 5);
  EXPECT_EQ(run(base + (dir_ / "x").string(), "NMQ_SEED=abc").code, 2);
}

TEST_F(Cli, DeterministicAndMonteCarloEngines) {
  for (const char* e : {"gksl", "coupled_me", "nz"}) {
    const ToolRun r = run("simulate --model " + model("reference.json") + " --engine " + e +
                      " --dt 1e-3 --horizon 0.5 --out " + (dir_ / e).string());
    EXPECT_EQ(r.code, 0) << e << ": " << r.out;
    EXPECT_TRUE(fs::exists(dir_ / e / (std::string(e) + ".csv")));
  }
  const ToolRun mc = run("simulate --model " + model("reference.json") +
                     " --engine mc --traj 100 --dt 1e-3 --horizon 0.5 --stride 50 --out " +
                     (dir_ / "mc").string());
  EXPECT_EQ(mc.code, 0) << mc.out;
  const std::string csv = slurp(dir_ / "mc" / "mc_mean.csv");
  EXPECT_NE(csv.find("se_00"), std::string::npos);
}

TEST_F(Cli, ReducedEnginesAndWindow) {
  for (const char* e : {"coupled_blocks", "reduced_diag", "reduced_p"}) {
    const ToolRun r = run("simulate --model " + model("reference.json") + " --engine " + e +
                      " --dt 1e-3 --horizon 0.5 --out " + (dir_ / e).string());
    EXPECT_EQ(r.code, 0) << e << ": " << r.out;
  }
  const ToolRun w = run("simulate --model " + model("reference.json") +
                    " --engine reduced_diag --dt 1e-3 --horizon 0.5 --window 2 --out " +
                    (dir_ / "w").string());
  EXPECT_EQ(w.code, 1);
  EXPECT_NE(w.out.find("window"), std::string::npos) << w.out;
}

TEST_F(Cli, VerifyPassesAndCatchesFault) {
  const std::string base = "verify --model " + model("reference.json") +
                           " --horizon 1 --dt-list 4e-3,2e-3,1e-3 --closure-traj 32";
  const ToolRun ok = run(base + " --out " + (dir_ / "ok").string());
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_TRUE(fs::exists(dir_ / "ok" / "report.json"));
  const ToolRun bad = run(base + " --inject-fault=A00-sign");
  EXPECT_EQ(bad.code, 1) << bad.out;
  EXPECT_EQ(run("verify --model " + model("reference.json") + " --dt-list ''").code, 2);
}

TEST_F(Cli, KernelOfDecoupledModelIsZero) {
  const ToolRun r = run("kernel --model " + model("decoupled.json") +
                    " --dt 1e-3 --horizon 1 --t-samples 0.5,1 --tp-samples 0,0.25,0.5 --out " +
                    dir_.string());
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream csv(slurp(dir_ / "kernel.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream fields(line);
    std::string f;
    int col = 0;
    while (std::getline(fields, f, ',')) {
      // The first two columns are t and t'.
      if (col++ >= 2) {
        EXPECT_LE(std::abs(std::stod(f)), 1e-12) << line;
      }
    }
    ++rows;
  }
  EXPECT_GT(rows, 0);
  EXPECT_EQ(run("kernel --model " + model("reference.json") +
                " --dt 1e-3 --horizon 1 --t-samples 0.5 --tp-samples 0.00012")
                .code,
            1);
}

TEST(CliParse, MatrixAndModelRoundTrip) {
  const nlohmann::json j = nlohmann::json::parse(R"([[1, [0, 2]], [[0, -2], 3]])");
  const Matrix m = cli::parse_matrix(j, "x", 2, 2);
  EXPECT_EQ(m(0, 1), Complex(0, 2));
  EXPECT_EQ(cli::matrix_to_json(m), j);
  EXPECT_THROW(cli::parse_matrix(j, "x", 3, 2), cli::ParseError);
  EXPECT_THROW(cli::parse_matrix(nlohmann::json::parse("[[1, \"a\"], [0, 1]]"), "x", 2, 2),
               cli::ParseError);

  const ModelSpec ref = reference_model();
  const ModelSpec back = cli::parse_model(cli::model_to_json(ref));
  EXPECT_EQ(back.h_sa.matrix, ref.h_sa.matrix);
  EXPECT_EQ(back.couplings[0].a.matrix, ref.couplings[0].a.matrix);
  EXPECT_EQ(back.l0.matrix, ref.l0.matrix);
}

TEST(CliParse, ReferenceFileMatchesFixture) {
  const nlohmann::json j = cli::read_json_file(kModels + "/reference.json");
  const ModelSpec m = cli::parse_model(j);
  const ModelSpec ref = reference_model();
  EXPECT_EQ(m.h_s.matrix, ref.h_s.matrix);
  EXPECT_EQ(m.h_a.matrix, ref.h_a.matrix);
  EXPECT_EQ(m.l0.matrix, ref.l0.matrix);
  EXPECT_LT((cli::parse_init(j, m) - reference_init()).norm(), 1e-15);
}

TEST(CliParse, RunSectionAndHash) {
  cli::RunConfig cfg;
  cli::apply_run_section(nlohmann::json::parse(R"({"run": {"dt": 0.01, "seed": 3}})"), cfg);
  EXPECT_EQ(cfg.dt, 0.01);
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_THROW(cli::apply_run_section(nlohmann::json::parse(R"({"run": {"dt": "x"}})"), cfg),
               cli::ParseError);
  EXPECT_EQ(cli::fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(cli::hex64(0xabcull), "0000000000000abc");
  EXPECT_EQ(cli::format_number(0.1), "0.10000000000000001");
}

}  // namespace
}  // namespace nmq
