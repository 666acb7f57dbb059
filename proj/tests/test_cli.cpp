#include <wavesde/cli.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace wavesde;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("wavesde_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string write(const std::string& name, const json& j) {
    const auto p = dir / name;
    std::ofstream(p) << j.dump(2);
    return p.string();
  }

  int run(std::vector<std::string> args) {
    out.str("");
    err.str("");
    args.insert(args.begin(), "wavesde");
    return run_cli(args, out, err);
  }

  std::string out_dir(const std::string& name) const { return (dir / name).string(); }

  std::ostringstream out, err;
};

json sine_gordon_config() {
  return json::parse(R"({"model": {"name": "sine_gordon"}, "grid": {"dim": 1, "points": [32]},
                         "solver": {"T": 0.25, "dt": 0.01}, "noise": {"enabled": true}, "paths": 8})");
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string s;
  std::getline(in, s);
  return s;
}

}  // namespace

TEST_F(Cli, MissingModelIsAConfigError) {
  const auto cfg = write("c.json", json::parse(R"({"grid": {"dim": 1, "points": [16]}})"));
  EXPECT_EQ(run({"simulate", "--config", cfg, "--out", out_dir("o")}), cli::config_error);
  EXPECT_NE(err.str().find("model"), std::string::npos);
}

TEST_F(Cli, UnknownKeyIsAConfigError) {
  json j = sine_gordon_config();
  j["solver"]["dtt"] = 0.1;
  EXPECT_EQ(run({"simulate", "--config", write("c.json", j), "--out", out_dir("o")}), cli::config_error);
  EXPECT_NE(err.str().find("solver.dtt"), std::string::npos);
}

TEST_F(Cli, BadOverridesAndArgumentsAreRejected) {
  const auto cfg = write("c.json", sine_gordon_config());
  EXPECT_EQ(run({"simulate", "--config", cfg, "--out", out_dir("o"), "--paths", "1"}), cli::config_error);
  EXPECT_EQ(run({"simulate", "--config", cfg, "--out", out_dir("o"), "--dt", "-1"}), cli::config_error);
  EXPECT_EQ(run({"simulate"}), cli::config_error);
  EXPECT_EQ(run({"frobnicate", "--config", cfg}), cli::config_error);
}

TEST_F(Cli, SimulateWritesHashedArtifacts) {
  const auto cfg = write("c.json", sine_gordon_config());
  ASSERT_EQ(run({"simulate", "--config", cfg, "--out", out_dir("o")}), cli::ok) << err.str();
  const fs::path o = out_dir("o");
  ASSERT_TRUE(fs::exists(o / "report.json"));
  ASSERT_TRUE(fs::exists(o / "trajectory.csv"));
  ASSERT_TRUE(fs::exists(o / "config.resolved.json"));
  const json rep = load_json_file((o / "report.json").string());
  const std::string hash = rep.at("config_hash");
  EXPECT_EQ(rep.at("master_seed"), 1);
  EXPECT_EQ(first_line(o / "trajectory.csv"), "# config_hash=" + hash);

  // the resolved config reproduces the same hash and is accepted back
  EXPECT_EQ(load_json_file((o / "config.resolved.json").string()).at("config_hash"), hash);
  ASSERT_EQ(run({"simulate", "--config", (o / "config.resolved.json").string(), "--out", out_dir("o2")}), cli::ok);
  EXPECT_EQ(load_json_file((fs::path(out_dir("o2")) / "report.json").string()).at("config_hash"), hash);
}

TEST_F(Cli, RefusesToMixConfigsInOneDirectory) {
  const auto cfg = write("c.json", sine_gordon_config());
  ASSERT_EQ(run({"simulate", "--config", cfg, "--out", out_dir("o")}), cli::ok);
  EXPECT_EQ(run({"simulate", "--config", cfg, "--out", out_dir("o"), "--seed", "9"}), cli::config_error);
  EXPECT_NE(err.str().find("refusing"), std::string::npos);
  EXPECT_EQ(run({"simulate", "--config", cfg, "--out", out_dir("o")}), cli::ok);
}

TEST_F(Cli, TamperedEmbeddedHashIsRejected) {
  json j = sine_gordon_config();
  j["config_hash"] = "0000";
  EXPECT_EQ(run({"simulate", "--config", write("c.json", j), "--out", out_dir("o")}), cli::config_error);
}

TEST_F(Cli, EarlyStopNeedsExplicitConsent) {
  json j = sine_gordon_config();
  j["noise"]["lambda0"] = 50.0;
  j["solver"]["Lambda"] = 1.0;
  j["solver"]["T"] = 1.0;
  const Grid g = build_grid(parse_config(j));
  const auto c = parse_config(j);
  const Model m = build_model(c, g);
  const double f0 = stopping_functional(m.generator, build_initial(c, m), c.model.N);
  j["solver"]["Lambda"] = 1.05 * f0;
  const auto cfg = write("c.json", j);
  EXPECT_EQ(run({"simulate", "--config", cfg, "--out", out_dir("o")}), cli::blowup);
  EXPECT_EQ(run({"simulate", "--config", cfg, "--out", out_dir("o2"), "--allow-stop"}), cli::ok);
  const json rep = load_json_file((fs::path(out_dir("o2")) / "report.json").string());
  EXPECT_FALSE(rep.at("stop_time").is_null());
}

TEST_F(Cli, VerifyCatchesBrokenNonlinearity) {
  json j = json::parse(R"({"model": {"name": "klein_gordon"}, "grid": {"dim": 1, "points": [32]}, "verify": {"samples": 200}})");
  EXPECT_EQ(run({"verify", "--config", write("good.json", j), "--out", out_dir("good")}), cli::ok) << err.str();
  j["model"]["inject_broken_J"] = true;
  EXPECT_EQ(run({"verify", "--config", write("bad.json", j), "--out", out_dir("bad")}), cli::verification_failed);
  EXPECT_NE(err.str().find("violated: "), std::string::npos);
}

TEST_F(Cli, PicardConvergeAndChaosRun) {
  const auto cfg = write("c.json", sine_gordon_config());
  EXPECT_EQ(run({"picard", "--config", cfg, "--out", out_dir("p")}), cli::ok) << err.str();
  EXPECT_TRUE(fs::exists(fs::path(out_dir("p")) / "residuals.csv"));
  EXPECT_EQ(run({"converge", "--config", cfg, "--out", out_dir("c")}), cli::ok) << err.str();
  EXPECT_TRUE(fs::exists(fs::path(out_dir("c")) / "convergence.csv"));
  EXPECT_EQ(run({"chaos", "--config", cfg, "--out", out_dir("w"), "--paths", "200"}), cli::ok) << err.str();
  EXPECT_TRUE(fs::exists(fs::path(out_dir("w")) / "chaos_coefficients.csv"));
  EXPECT_EQ(run({"chaos", "--config", cfg, "--out", out_dir("w2"), "--json", "--paths", "200"}), cli::ok);
  EXPECT_NO_THROW(json::parse(out.str()));
}
