#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gridattack/cli.hpp"
#include "gridattack/report.hpp"

namespace fs = std::filesystem;
using gridattack::cli_dispatch;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli_dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("gridattack-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }

  fs::path dir;
};

}  // namespace

TEST_F(Cli, ValidateIeee118) {
  const Outcome o = run({"validate", "--case", "ieee118.json"});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("N=186"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("generators=54"), std::string::npos) << o.out;
}

TEST_F(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(run({"validate", "--bogus"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
}

TEST_F(Cli, InvalidConfigIsValidationError) {
  std::ofstream(path("bad.json")) << R"({"train": {"episodes": 5, "learning_speed": 3}})";
  const Outcome unknown = run({"train", "--preset", "ieee14-desk", "--config", path("bad.json"), "--out", path("r")});
  EXPECT_EQ(unknown.code, 3);
  EXPECT_NE(unknown.err.find("learning_speed"), std::string::npos) << unknown.err;
  std::ofstream(path("typed.json")) << R"({"train": {"episodes": "many"}})";
  EXPECT_EQ(run({"train", "--preset", "ieee14-desk", "--config", path("typed.json"), "--out", path("r2")}).code, 3);
  EXPECT_EQ(run({"train", "--preset", "ieee14-desk", "--method", "qmix", "--out", path("r3")}).code, 3);
  EXPECT_EQ(run({"validate", "--case", path("missing.json")}).code, 3);
}

TEST_F(Cli, RuntimeFailureRecordedInManifest) {
  std::ofstream(path("junk.bin")) << "not a checkpoint";
  const Outcome o = run({"attack", "--checkpoint", path("junk.bin"), "--out", path("a")});
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.code, 2);
  if (fs::exists(path("a/manifest.json"))) {
    const auto m = nlohmann::json::parse(slurp(path("a/manifest.json")));
    EXPECT_EQ(m["status"], "failed");
  }
}

TEST_F(Cli, MassTrainsNineAttackersInOneStage) {
  const Outcome o = run({"train", "--preset", "ieee14-desk", "--method", "mass", "--K", "3", "--M", "3", "--episodes",
                         "2", "--out", path("mass"), "--quiet"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("K=9 M=1"), std::string::npos) << o.out;
  const auto summary = nlohmann::json::parse(slurp(path("mass/summary.json")));
  EXPECT_EQ(summary["greedy"]["lines"].size(), 9u);
  EXPECT_EQ(summary["greedy"]["stage_loss_mw"].size(), 1u);
}

TEST_F(Cli, OracleEnumeratesAndPrintsArgmax) {
  const Outcome o = run({"oracle", "--case", "ieee14.json", "--K", "1", "--M", "2", "--out", path("o")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("max_loss_mw="), std::string::npos);
  EXPECT_NE(o.out.find("argmax stage1="), std::string::npos);
  const auto j = nlohmann::json::parse(slurp(path("o/oracle.json")));
  EXPECT_GT(j["max_loss_mw"].get<double>(), 0.0);
}

TEST_F(Cli, TrainReportGivesWindowedSeries) {
  const std::vector<std::string> train{"train", "--preset", "ieee14-desk", "--episodes", "400", "--seed", "3", "--quiet"};
  auto a = train, b = train;
  a.insert(a.end(), {"--out", path("a")});
  b.insert(b.end(), {"--out", path("b")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(slurp(path("a/checkpoint.bin")), slurp(path("b/checkpoint.bin")));
  for (const char* run_dir : {"a", "b"}) {
    const Outcome r = run({"report", "--run", path(run_dir)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const std::string ma = slurp(path("a/report/moving_average.csv"));
  EXPECT_EQ(ma.rfind("episode,mean_return\n", 0), 0u);
  EXPECT_EQ(line_count(ma), 1u + 201u);
  EXPECT_EQ(ma, slurp(path("b/report/moving_average.csv")));
}

TEST_F(Cli, ReportListsMissingInputs) {
  fs::create_directories(path("empty"));
  const Outcome o = run({"report", "--run", path("empty")});
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.err.find("manifest.json"), std::string::npos) << o.err;
}

TEST_F(Cli, ArtifactRootFromEnvironment) {
  ::setenv("GRIDATTACK_ARTIFACT_ROOT", path("root").c_str(), 1);
  const Outcome o = run({"oracle", "--case", "ieee14.json", "--K", "1", "--M", "1"});
  ::unsetenv("GRIDATTACK_ARTIFACT_ROOT");
  ASSERT_EQ(o.code, 0) << o.err;
  std::size_t runs = 0;
  for (const auto& entry : fs::directory_iterator(path("root"))) {
    EXPECT_EQ(entry.path().filename().string().rfind("oracle-", 0), 0u);
    EXPECT_TRUE(fs::exists(entry.path() / "manifest.json"));
    ++runs;
  }
  EXPECT_EQ(runs, 1u);
}

TEST(Report, MovingAverageWindowArithmetic) {
  std::vector<double> x(400);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = static_cast<double>(k);
  const auto ma = gridattack::moving_average(x, 200);
  ASSERT_EQ(ma.size(), 201u);
  EXPECT_DOUBLE_EQ(ma.front(), 99.5);
  EXPECT_DOUBLE_EQ(ma.back(), 299.5);
  EXPECT_TRUE(gridattack::moving_average(std::vector<double>(10, 1.0), 200).empty());
}
