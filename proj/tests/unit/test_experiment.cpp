#include "aflow/experiment.hpp"

#include "doctest.h"

#include <filesystem>
#include <fstream>

using namespace aflow;

TEST_CASE("config parsing fills defaults and rejects unknown keys") {
  const ExperimentConfig c = parse_config("# demo\nsystem = da_susp\nseed = 5\nanalyses = lyapunov\nlyapunov.T = 100\n");
  CHECK(c.system == "da_susp");
  CHECK(c.seed == 5);
  CHECK(c.get("radius") == "0.08");
  CHECK(c.get("lyapunov.T") == "100");
  CHECK(c.get("lyapunov.transient") == "1000");
  CHECK(c.get("lyapunov.x0") == "0.3,0.6,0");

  try {
    parse_config("system = da_susp\n\nfoo = 1\n");
    FAIL("expected an error");
  } catch (const ConfigValidationError& e) {
    CHECK(e.line == 3);
    CHECK(e.key == "foo");
  }
  CHECK_THROWS_AS(parse_config("system = nope\n"), ConfigValidationError);
  CHECK_THROWS_AS(parse_config("seed = 1\n"), ConfigValidationError);
  CHECK_THROWS_AS(parse_config("system = da_susp\nradius = abc\n"), ConfigValidationError);
  CHECK_THROWS_AS(parse_config("system = da_susp\nlyapunov.T = 5\n"), ConfigValidationError);
  CHECK_THROWS_AS(parse_config("system = lemma1\nanalyses = box_counting\n"), ConfigValidationError);
  CHECK_THROWS_AS(parse_config("system = da_susp\nsystem = da_susp\n"), ConfigValidationError);
  CHECK_THROWS_AS(parse_config("system da_susp\n"), ConfigValidationError);
}

TEST_CASE("system parameters are validated when the system is built") {
  const ExperimentConfig c = parse_config("system = da_susp\nradius = 0.7\n");
  CHECK_THROWS_AS(run_experiment(c, false), ConfigValidationError);
}

TEST_CASE("overrides") {
  ExperimentConfig c = parse_config("system = lemma1\n");
  apply_overrides(c, {{"seed", "9"}, {"jobs", "2"}});
  CHECK(c.seed == 9);
  CHECK(c.jobs == 2);
  CHECK_THROWS_AS(apply_overrides(c, {{"radius", "1"}}), ConfigValidationError);
}

TEST_CASE("system catalog") {
  CHECK(system_catalog().size() == 7);
  const std::string text = list_systems_text();
  for (const auto& s : system_catalog()) CHECK(text.find(s.name) != std::string::npos);
}

TEST_CASE("cloud CSV round trip") {
  const ExperimentConfig c = parse_config("system = lemma1\n");
  const SmoothSystem sys = build_named_system(c);
  const std::vector<State> pts{{0, Eigen::Vector3d(0.1, 1.0 / 3.0, -2e-17)}, {0, Eigen::Vector3d(1, 2, 3)}};
  const std::string csv = format_cloud_csv(sys, pts);
  CHECK(csv.rfind("chart_id,c1,c2,c3\n", 0) == 0);
  const auto back = parse_cloud_csv(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].chart_id == "lemma1");
  CHECK(back[0].local == pts[0].x);
  CHECK(back[1].local == pts[1].x);
}

TEST_CASE("run writes reports and a manifest; identical seeds give identical reports") {
  const auto dir = std::filesystem::temp_directory_path() / "aflow_unit_run";
  std::filesystem::remove_all(dir);
  const std::string text = "system = lemma1\nanalyses = equilibria, periodic_orbits, trap_check\noutput_dir = " +
                           dir.string() + "\n";
  const ExperimentConfig c = parse_config(text);
  const RunResult r = run_experiment(c);
  CHECK(r.exit_code == kExitOk);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "equilibria.json"));
  std::ifstream f(dir / "trap_check.json");
  std::stringstream ss;
  ss << f.rdbuf();
  CHECK(ss.str() == r.outcomes[2].report_json);
  const RunResult again = run_experiment(c, false);
  for (std::size_t i = 0; i < r.outcomes.size(); ++i) CHECK(r.outcomes[i].report_json == again.outcomes[i].report_json);
  std::filesystem::remove_all(dir);
}

TEST_CASE("failed checks give exit code 3") {
  const ExperimentConfig c = parse_config("system = lemma1\nreversed = true\nanalyses = trap_check\n");
  const RunResult r = run_experiment(c, false);
  CHECK(r.exit_code == kExitCheckFailed);
  CHECK(r.failed == std::vector<std::string>{"trap_check"});
}

TEST_CASE("system listing is stable and names its anchors") {
  const std::string a = list_systems_text(), b = list_systems_text();
  CHECK(a == b);
  for (const auto& s : system_catalog()) CHECK(!s.anchor.empty());
}
