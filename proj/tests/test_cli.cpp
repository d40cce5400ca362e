#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <string>
#include <vector>

#include <json.hpp>

#include "dafm/cli.hpp"
#include "dafm/fit_io.hpp"
#include "dafm/log.hpp"
#include "dafm/panel.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  const int code = dafm::cli::run(args);
  dafm::set_log_level(dafm::LogLevel::quiet);
  return code;
}

std::string str(const fs::path& p) { return p.string(); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("simulate writes a panel and its truth, deterministically") {
    const auto dir = testing::scratch_dir("cli_sim");
    REQUIRE(run({"simulate", "--n", "12", "--t", "15", "--seed", "4", "--out", str(dir / "a"), "--quiet"}) == 0);
    REQUIRE(run({"simulate", "--n", "12", "--t", "15", "--seed", "4", "--out", str(dir / "b"), "--quiet"}) == 0);
    const dafm::Panel p = dafm::load_panel(dir / "a" / "panel.csv");
    CHECK(p.periods() == 15);
    CHECK(p.series() == 12);
    CHECK(testing::read_file(dir / "a" / "panel.csv") == testing::read_file(dir / "b" / "panel.csv"));
    CHECK(fs::exists(dir / "a" / "truth" / "F0.csv"));
    CHECK(fs::exists(dir / "a" / "truth" / "loadings0.csv"));
    const auto manifest = nlohmann::json::parse(testing::read_file(dir / "a" / "manifest.json"));
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest["config"]["seed"] == "4");
    CHECK(manifest["versions"].contains("dafm"));
  }

  TEST_CASE("usage errors exit with code 2") {
    const auto dir = testing::scratch_dir("cli_usage");
    CHECK(run({"simulate", "--dgp", "nonsense", "--out", str(dir), "--quiet"}) == dafm::cli::usage_error);
    CHECK(run({"simulate", "--bogus"}) == dafm::cli::usage_error);
    CHECK(run({}) == dafm::cli::usage_error);
    CHECK(run({"fit", "--panel", str(dir / "missing.csv"), "--out", str(dir / "f"), "--quiet"}) ==
          dafm::cli::usage_error);
    testing::write_file(dir / "bad.csv", "a,b\n1,2\n3,x\n");
    CHECK(run({"fit", "--panel", str(dir / "bad.csv"), "--out", str(dir / "f"), "--quiet"}) == dafm::cli::usage_error);
    CHECK(run({"fit", "--panel", str(dir / "bad.csv"), "--levels", "0.5,0.2", "--out", str(dir / "g"), "--quiet"}) ==
          dafm::cli::usage_error);
  }

  TEST_CASE("a single level fit is the quantile factor model") {
    const auto dir = testing::scratch_dir("cli_qfm");
    REQUIRE(run({"simulate", "--n", "15", "--t", "20", "--out", str(dir / "sim"), "--quiet"}) == 0);
    const std::string panel = str(dir / "sim" / "panel.csv");
    REQUIRE(run({"fit", "--panel", panel, "--levels", "0.5", "--r", "2", "--out", str(dir / "fit"), "--quiet"}) == 0);
    REQUIRE(run({"fit-qfm", "--panel", panel, "--tau", "0.5", "--r", "2", "--out", str(dir / "qfm"), "--quiet"}) == 0);
    CHECK(testing::read_file(dir / "fit" / "F.csv") == testing::read_file(dir / "qfm" / "F.csv"));
    const dafm::FactorFit fit = dafm::load_fit(dir / "fit");
    CHECK(fit.r() == 2);
    CHECK(fit.grid.size() == 1);
  }

  TEST_CASE("config files and flags") {
    const auto dir = testing::scratch_dir("cli_config");
    REQUIRE(run({"simulate", "--n", "15", "--t", "20", "--out", str(dir / "sim"), "--quiet"}) == 0);
    const std::string panel = str(dir / "sim" / "panel.csv");
    testing::write_file(dir / "fit.cfg", "panel = " + panel + "\nr = 2\nquiet = true\n");
    REQUIRE(run({"fit", "--config", str(dir / "fit.cfg"), "--out", str(dir / "from_config")}) == 0);
    CHECK(dafm::load_fit(dir / "from_config").r() == 2);
    REQUIRE(run({"fit", "--config", str(dir / "fit.cfg"), "--r", "1", "--out", str(dir / "flag_wins")}) == 0);
    CHECK(dafm::load_fit(dir / "flag_wins").r() == 1);

    testing::write_file(dir / "fit.json", "{\"panel\": \"" + panel + "\", \"r\": 3, \"quiet\": true}");
    REQUIRE(run({"fit", "--config", str(dir / "fit.json"), "--out", str(dir / "json")}) == 0);
    CHECK(dafm::load_fit(dir / "json").r() == 3);

    testing::write_file(dir / "typo.cfg", "rr = 2\n");
    CHECK(run({"fit", "--config", str(dir / "typo.cfg"), "--panel", panel}) == dafm::cli::usage_error);
  }

  TEST_CASE("rerun reproduces a run bit for bit") {
    const auto dir = testing::scratch_dir("cli_rerun");
    REQUIRE(run({"simulate", "--n", "15", "--t", "20", "--seed", "9", "--out", str(dir / "sim"), "--quiet"}) == 0);
    REQUIRE(run({"fit", "--panel", str(dir / "sim" / "panel.csv"), "--r", "2", "--weights", "high2x", "--out",
                 str(dir / "fit"), "--quiet"}) == 0);
    REQUIRE(run({"rerun", str(dir / "fit" / "manifest.json"), "--out", str(dir / "again")}) == 0);
    CHECK(testing::read_file(dir / "fit" / "F.csv") == testing::read_file(dir / "again" / "F.csv"));
    CHECK(testing::read_file(dir / "fit" / "Lambda_5.csv") == testing::read_file(dir / "again" / "Lambda_5.csv"));
    CHECK(run({"rerun", str(dir / "nope.json")}) == dafm::cli::usage_error);
  }

  TEST_CASE("output directory from the environment") {
    const auto dir = testing::scratch_dir("cli_env");
    ::setenv(dafm::cli::kOutputDirEnv, str(dir / "env_out").c_str(), 1);
    const int code = run({"simulate", "--n", "10", "--t", "10", "--quiet"});
    ::unsetenv(dafm::cli::kOutputDirEnv);
    CHECK(code == 0);
    CHECK(fs::exists(dir / "env_out" / "panel.csv"));
  }

  TEST_CASE("rank, infer, forecast and eval-sim run end to end") {
    const auto dir = testing::scratch_dir("cli_e2e");
    REQUIRE(run({"simulate", "--n", "20", "--t", "60", "--seed", "2", "--out", str(dir / "sim"), "--quiet"}) == 0);
    const std::string panel = str(dir / "sim" / "panel.csv");

    REQUIRE(run({"rank", "--panel", panel, "--smax", "4", "--out", str(dir / "rank"), "--quiet"}) == 0);
    CHECK(fs::exists(dir / "rank" / "rank_audit.csv"));
    REQUIRE(run({"rank", "--panel", panel, "--method", "eigen", "--smax", "4", "--out", str(dir / "rank2"), "--quiet"}) ==
            0);

    REQUIRE(run({"fit", "--panel", panel, "--r", "4", "--out", str(dir / "fit"), "--quiet"}) == 0);
    REQUIRE(run({"infer", "--panel", panel, "--fit", str(dir / "fit"), "--out", str(dir / "infer"), "--quiet"}) == 0);
    const std::string ci = testing::read_file(dir / "infer" / "factor_ci.csv");
    CHECK(ci.rfind("t,time,component,estimate,se,lower,upper,positive_definite\n", 0) == 0);
    CHECK(std::count(ci.begin(), ci.end(), '\n') == 1 + 60 * 4);

    REQUIRE(run({"forecast", "--panel", panel, "--target-column", "1", "--window", "45", "--horizons", "1,3", "--r",
                 "1", "--max-lag", "2", "--out", str(dir / "fc"), "--quiet"}) == 0);
    const std::string summary = testing::read_file(dir / "fc" / "summary.csv");
    CHECK(summary.find("1,15,") != std::string::npos);
    CHECK(summary.find("3,13,") != std::string::npos);

    REQUIRE(run({"eval-sim", "--table", "2", "--sizes", "15x15", "--reps", "2", "--methods", "dafm,pca", "--out",
                 str(dir / "ev"), "--quiet"}) == 0);
    const std::string table = testing::read_file(dir / "ev" / "table.csv");
    CHECK(table.rfind("method,N,T,reps,f1,f2,f3\n", 0) == 0);
    CHECK(table.find("dafm,15,15,2,") != std::string::npos);
    CHECK(table.find("pca,15,15,2,") != std::string::npos);
  }
}
