#include "aflow/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"aflow: experiments on A-flows built by surgery"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run the analyses listed in a config file");
  std::string config_path;
  std::string output_dir;
  std::string seed;
  std::string jobs;
  run->add_option("config", config_path, "key = value config file")->required();
  run->add_option("--output-dir", output_dir, "overrides output_dir");
  run->add_option("--seed", seed, "overrides seed");
  run->add_option("--jobs", jobs, "overrides jobs");

  auto* list = app.add_subcommand("list-systems", "print the system registry");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? aflow::kExitOk : aflow::kExitConfig;
  }

  if (list->parsed()) {
    std::cout << aflow::list_systems_text();
    return aflow::kExitOk;
  }

  try {
    aflow::ExperimentConfig cfg = aflow::load_config(config_path);
    std::map<std::string, std::string> overrides;
    if (!output_dir.empty()) overrides["output_dir"] = output_dir;
    if (!seed.empty()) overrides["seed"] = seed;
    if (!jobs.empty()) overrides["jobs"] = jobs;
    if (!overrides.empty()) aflow::apply_overrides(cfg, overrides);
    const aflow::RunResult r = aflow::run_experiment(cfg);
    for (const auto& o : r.outcomes)
      std::cout << (o.passed ? "ok     " : "FAILED ") << o.name << "  -> " << cfg.output_dir << "/" << o.report_file
                << "\n";
    return r.exit_code;
  } catch (const aflow::ConfigValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return aflow::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return aflow::kExitError;
  }
}
