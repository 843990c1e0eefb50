#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ctsketch/artifacts.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(CTSKETCH_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("ctsketch_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, BuildSumFourShapes) {
  const auto r = run("build --task sum_4 --out " + path("s4"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("10x10 "), std::string::npos);
  EXPECT_NE(r.out.find("19x19 "), std::string::npos);
  const auto m = json::parse(slurp(path("s4/manifest.json")));
  ASSERT_EQ(m["summaries"].size(), 2u);
  EXPECT_EQ(m["summaries"][1]["shape"], json::array({19, 19}));
}

TEST_F(Cli, BuildAddTwoShapes) {
  const auto r = run("build --task add_2 --out " + path("a2"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::size_t sums = 0;
  for (std::size_t pos = 0; (pos = r.out.find("10x10 ", pos)) != std::string::npos; ++pos) ++sums;
  EXPECT_EQ(sums, 2u);
  EXPECT_NE(r.out.find("19x20 "), std::string::npos);
}

TEST_F(Cli, MonolithicSumSixteenIsRejected) {
  const auto r = run("build --task sum_16 --split 16 --out " + path("mono"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("decompose"), std::string::npos) << r.out;
  const auto d = run("build --task sum_16 --split 2,2,2,2 --intermediate onehot --root onehot --out " + path("dec"));
  ASSERT_EQ(d.code, 0) << d.out;
  EXPECT_NE(d.out.find("887899 entries"), std::string::npos) << d.out;
}

TEST_F(Cli, SketchReportsErrors) {
  ASSERT_EQ(run("build --task sum_8 --out " + path("s8")).code, 0);
  for (const std::string rank : {"2", "full"}) {
    const auto r = run("sketch --summaries " + path("s8") + " --rank " + rank + " --out " + path("k" + rank));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto report = json::parse(slurp(path("k" + rank + "/report.json")));
    ASSERT_EQ(report.size(), 3u);
    const double tol = rank == "2" ? 1e-5 : 1e-9;
    for (const auto& row : report) {
      EXPECT_LE(row["frobenius_error"].get<double>(), tol);
      EXPECT_LE(row["error_bound"].get<double>(), tol);
    }
  }
}

TEST_F(Cli, InferOneHotLeaves) {
  {
    std::ofstream f(path("leaves.json"));
    json leaves = json::array();
    for (int d : {1, 2, 3, 4}) {
      std::vector<double> p(10, 0.0);
      p[d] = 1.0;
      leaves.push_back(p);
    }
    f << leaves.dump();
  }
  auto r = run("infer --task sum_4 --rank full --intermediate onehot --leaves " + path("leaves.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  auto out = json::parse(r.out);
  EXPECT_EQ(out["kind"], "scalar");
  EXPECT_NEAR(out["value"].get<double>(), 10.0, 1e-9);

  ASSERT_EQ(run("build --task sum_4 --out " + path("s4")).code, 0);
  ASSERT_EQ(run("sketch --summaries " + path("s4") + " --rank full --out " + path("k4")).code, 0);
  r = run("infer --sketches " + path("k4") + " --leaves " + path("leaves.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NEAR(json::parse(r.out)["value"].get<double>(), 10.0, 1e-2);

  EXPECT_EQ(run("infer --sketches " + path("missing") + " --leaves " + path("leaves.json")).code, 3);
  EXPECT_EQ(run("infer --task sum_4 --leaves " + path("missing.json")).code, 3);
}

TEST_F(Cli, VerifyFreshAndCorrupted) {
  ASSERT_EQ(run("build --task sum_4 --out " + path("s4")).code, 0);
  ASSERT_EQ(run("sketch --summaries " + path("s4") + " --rank 2 --out " + path("k4")).code, 0);
  auto r = run("verify --sketches " + path("k4") + " --summaries " + path("s4"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);

  // Overwrite the last stored value of a core.
  const auto core = path("k4/p1_core1.cts");
  {
    std::fstream f(core, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-8, std::ios::end);
    const double bad = 5.0;
    f.write(reinterpret_cast<const char*>(&bad), sizeof bad);
  }
  r = run("verify --sketches " + path("k4") + " --summaries " + path("s4"));
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_NE(r.out.find("reconstruction_bound   sum_19_19"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);

  std::ofstream(core, std::ios::trunc) << "CTS1";
  r = run("verify --sketches " + path("k4"));
  EXPECT_EQ(r.code, 3) << r.out;
}

TEST_F(Cli, TrainZeroEpochsAndDeterminism) {
  auto r = run("train --task sum_4 --epochs 0 --seed 3 --out " + path("t0"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(path("t0/metrics.csv")), "epoch,wall_seconds,train_loss,task_acc,symbol_acc\n");
  const auto m = ctsketch::model_from_json(json::parse(slurp(path("t0/model.json"))));
  auto init = ctsketch::PerceptualModel::linear(m.input_dim, 10);
  init.randomize(3);
  EXPECT_EQ(m.theta, init.theta);

  auto body = [&](const std::string& name) {
    std::istringstream in(slurp(path(name + "/metrics.csv")));
    std::string line, out;
    while (std::getline(in, line)) {
      // Drop the wall-clock column.
      const auto a = line.find(',');
      const auto b = line.find(',', a + 1);
      out += line.substr(0, a) + line.substr(b) + "\n";
    }
    return out;
  };
  const std::string args = "train --task sum_4 --epochs 2 --lr 0.01 --train-size 200 --test-size 50 --seed 5 --out ";
  ASSERT_EQ(run(args + path("a")).code, 0);
  ASSERT_EQ(run(args + path("b")).code, 0);
  EXPECT_EQ(body("a"), body("b"));
  EXPECT_EQ(slurp(path("a/model.json")), slurp(path("b/model.json")));
}

TEST_F(Cli, ConfigErrors) {
  EXPECT_EQ(run("build --task sum_4 --rank x --out " + path("x")).code, 2);
  EXPECT_EQ(run("build --task nope_3 --out " + path("x")).code, 2);
  EXPECT_EQ(run("train --task sum_4 --loss mse --out " + path("x")).code, 2);
  EXPECT_EQ(run("").code, 2);
  {
    std::ofstream f(path("bad.json"));
    f << R"({"task": "sum_4", "rank": 0})";
  }
  EXPECT_EQ(run("build --config " + path("bad.json") + " --out " + path("x")).code, 2);
  {
    std::ofstream f(path("cfg.json"));
    f << R"({"task": "add_2", "rank": 3, "ranks": {"carry_add": "full"}, "sigma": 0.4})";
  }
  const auto r = run("build --config " + path("cfg.json") + " --out " + path("ok"));
  EXPECT_EQ(r.code, 0) << r.out;
}

TEST_F(Cli, AblateDecomposition) {
  const auto r = run("ablate decomposition --task sum_16");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("exceeds budget"), std::string::npos);
  EXPECT_NE(r.out.find("8.879e+05"), std::string::npos) << r.out;
}
