#include "ldpms/cli/commands.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ldpms;
using namespace ldpms::cli;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ldpms_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write_config(const std::string& name, const std::string& body) {
    const auto p = dir_ / name;
    std::ofstream(p) << body;
    return p.string();
  }

  int run_cmd(const std::string& cmd, const std::string& config, const std::string& out_sub, int threads = 1,
              std::optional<std::uint64_t> seed = std::nullopt) {
    Overrides ov;
    ov.out_dir = (dir_ / out_sub).string();
    ov.threads = threads;
    ov.seed = seed;
    out_.str("");
    err_.str("");
    return run(cmd, config, ov, out_, err_);
  }

  nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, CheckGaussianPasses) {
  const auto cfg = write_config("g.json", R"({"model":{"suite":"gaussian","dimension":2}})");
  EXPECT_EQ(run_cmd("check", cfg, "o"), kOk);
  const auto j = read_json(dir_ / "o" / "check.json");
  EXPECT_DOUBLE_EQ(j.at("uniform_ellipticity").at("kappa").get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(dir_ / "o" / "manifest.json"));
}

TEST_F(CliTest, CheckNamesViolatedAssumption) {
  const std::pair<const char*, const char*> cases[] = {
      {R"({"model":{"suite":"degenerate"}})", "uniform_ellipticity"},
      {R"({"model":{"suite":"seam"}})", "lipschitz_growth"},
      {R"({"model":{"suite":"gaussian"},"regime":{"epsilon":[0.2,0.1,0.05],"delta_law":{"exponent":2}}})",
       "scale_separation"},
  };
  for (const auto& [body, name] : cases) {
    const auto cfg = write_config("c.json", body);
    EXPECT_EQ(run_cmd("check", cfg, "o"), kAssumption) << body;
    EXPECT_NE(err_.str().find(name), std::string::npos) << err_.str();
  }
}

TEST_F(CliTest, UnknownKeyIsConfigError) {
  const auto cfg = write_config("bad.json", R"({"model":{"suite":"gaussian","bogus":1}})");
  EXPECT_EQ(run_cmd("check", cfg, "o"), kConfig);
  EXPECT_NE(err_.str().find("bogus"), std::string::npos);
}

TEST_F(CliTest, MalformedJsonIsConfigError) {
  const auto cfg = write_config("bad.json", "{\"model\": {\n  \"suite\": }\n");
  EXPECT_EQ(run_cmd("check", cfg, "o"), kConfig);
  EXPECT_NE(err_.str().find("line 2"), std::string::npos) << err_.str();
}

TEST_F(CliTest, MissingConfigIsIoError) {
  EXPECT_EQ(run_cmd("check", (dir_ / "nope.json").string(), "o"), kIo);
}

TEST_F(CliTest, UnwritableOutputIsIoError) {
  const auto cfg = write_config("g.json", R"({"model":{"suite":"gaussian"}})");
  std::ofstream(dir_ / "file") << "x";
  EXPECT_EQ(run_cmd("check", cfg, "file/sub"), kIo);
}

TEST_F(CliTest, ZeroDynamicsTrajectoryIsConstant) {
  const auto cfg = write_config("z.json", R"({
    "model": {"dimension": 2, "sigma": {"type": "constant", "value": [[0,0],[0,0]]},
              "b": {"type": "zero"}, "c": {"type": "zero"}, "k": {"type": "zero"}},
    "scheme": {"T": 1, "dt": 0.1, "x0": [0.25, -0.5]},
    "task": {"simulate": {"skip_check": true}}})");
  ASSERT_EQ(run_cmd("simulate", cfg, "o"), kOk) << err_.str();
  std::ifstream in(dir_ / "o" / "trajectory_00000.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "time,x1,x2,jumps");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.find(',') + 1), "0.25,-0.5,0");
  }
  EXPECT_EQ(rows, 11);
  EXPECT_FALSE(fs::exists(dir_ / "o" / "summary.json"));
}

TEST_F(CliTest, SimulateBatchWritesFilesAndSummary) {
  const auto cfg = write_config("j.json", R"({"model":{"suite":"jump_gaussian"},
    "scheme":{"dt":0.01,"seed":3},"task":{"simulate":{"paths":100}}})");
  ASSERT_EQ(run_cmd("simulate", cfg, "o"), kOk) << err_.str();
  int csv = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "o"))
    if (e.path().extension() == ".csv") ++csv;
  EXPECT_EQ(csv, 100);
  const auto s = read_json(dir_ / "o" / "summary.json");
  EXPECT_EQ(s.at("n_paths").get<int>(), 100);
  const auto m = read_json(dir_ / "o" / "manifest.json");
  EXPECT_EQ(m.at("outputs").size(), 101u);
}

TEST_F(CliTest, SimulateIsReproducible) {
  const auto cfg = write_config("j.json", R"({"model":{"suite":"jump_gaussian","dimension":2},
    "scheme":{"dt":0.01,"seed":7},"task":{"simulate":{"paths":12}}})");
  ASSERT_EQ(run_cmd("simulate", cfg, "a", 1), kOk);
  ASSERT_EQ(run_cmd("simulate", cfg, "b", 8), kOk);
  ASSERT_EQ(run_cmd("simulate", (dir_ / "a" / "manifest.json").string(), "c", 3), kOk);
  for (int i = 0; i < 12; ++i) {
    std::ostringstream name;
    name << "trajectory_" << std::setw(5) << std::setfill('0') << i << ".csv";
    const auto a = slurp(dir_ / "a" / name.str());
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(dir_ / "b" / name.str()));
    EXPECT_EQ(a, slurp(dir_ / "c" / name.str()));
  }
  EXPECT_EQ(read_json(dir_ / "a" / "manifest.json").at("config_hash"),
            read_json(dir_ / "c" / "manifest.json").at("config_hash"));
}

TEST_F(CliTest, SeedOverrideChangesOutput) {
  const auto cfg = write_config("g.json", R"({"model":{"suite":"gaussian"},"scheme":{"dt":0.01,"seed":1}})");
  ASSERT_EQ(run_cmd("simulate", cfg, "a"), kOk);
  ASSERT_EQ(run_cmd("simulate", cfg, "b", 1, 2), kOk);
  EXPECT_NE(slurp(dir_ / "a" / "trajectory_00000.csv"), slurp(dir_ / "b" / "trajectory_00000.csv"));
  EXPECT_EQ(read_json(dir_ / "b" / "manifest.json").at("seed").get<int>(), 2);
}

TEST_F(CliTest, RateGaussianTable) {
  const auto cfg = write_config("r.json", R"({"model":{"suite":"gaussian","dimension":2},
    "task":{"rate":{"velocities":[[0,0],[1,0],[0.5,0.5],[-1,2],[0.3,-0.7]]}}})");
  ASSERT_EQ(run_cmd("rate", cfg, "o"), kOk) << err_.str();
  const auto j = read_json(dir_ / "o" / "rate.json");
  const double expect[] = {0.0, 0.5, 0.25, 2.5, 0.29};
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_NEAR(j.at("estimates")[i].at("J").get<double>(), expect[i], 1e-3 * std::max(1.0, expect[i]));
  EXPECT_TRUE(fs::exists(dir_ / "o" / "rate_table.csv"));
}

TEST_F(CliTest, BoundGaussian) {
  const auto cfg = write_config("b.json", R"({"model":{"suite":"gaussian"},"task":{"bound":{"t":[1,4]}}})");
  ASSERT_EQ(run_cmd("bound", cfg, "o"), kOk) << err_.str();
  const auto j = read_json(dir_ / "o" / "bound.json");
  EXPECT_NEAR(j.at("bounds")[0].at("bound").get<double>(), std::sqrt(32.0 * std::numbers::pi), 0.1);
  EXPECT_NEAR(j.at("bounds")[1].at("bound").get<double>(), std::sqrt(8.0 * std::numbers::pi), 0.05);
  EXPECT_EQ(j.at("margin").at("status"), "pass");
}

TEST_F(CliTest, BoundDegenerateIsAssumptionFailure) {
  const auto cfg = write_config("d.json", R"({"model":{"suite":"degenerate"}})");
  EXPECT_EQ(run_cmd("bound", cfg, "o"), kAssumption);
}

TEST_F(CliTest, LdpSweepWritesVerdict) {
  const auto cfg = write_config("l.json", R"({"model":{"suite":"gaussian"},"scheme":{"dt":0.01,"seed":2},
    "regime":{"epsilon":[0.2,0.1]},
    "task":{"ldp":{"event":{"kind":"halfspace","normal":[1],"offset":1.0},"paths":1000}}})");
  ASSERT_EQ(run_cmd("ldp", cfg, "o"), kOk) << err_.str();
  const auto j = read_json(dir_ / "o" / "sweep.json");
  EXPECT_NEAR(j.at("target").get<double>(), -0.5, 1e-6);
  EXPECT_EQ(j.at("points").size(), 2u);
  EXPECT_TRUE(j.at("verdict") == "pass" || j.at("verdict") == "fail");
  EXPECT_TRUE(fs::exists(dir_ / "o" / "sweep.csv"));
}

TEST_F(CliTest, LdpRequiresEvent) {
  const auto cfg = write_config("l.json", R"({"model":{"suite":"gaussian"},"task":{"ldp":{}}})");
  EXPECT_EQ(run_cmd("ldp", cfg, "o"), kConfig);
}

TEST(CliParsing, NumberList) {
  std::istringstream in("0.2, 0.1\n0.05");
  EXPECT_EQ(parse_number_list(in), (std::vector<double>{0.2, 0.1, 0.05}));
  std::istringstream bad("0.2 x");
  EXPECT_THROW(parse_number_list(bad), ConfigError);
}
