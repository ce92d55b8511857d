#pragma once

#include "aflow/charts.hpp"
#include "aflow/system.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aflow {

/// Config problem with the 1-based line it was found on (0 when not tied to a line).
class ConfigValidationError : public std::runtime_error {
 public:
  ConfigValidationError(const std::string& what, int line, std::string key = {})
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line(line),
        key(std::move(key)) {}
  int line;
  std::string key;
};

/// Experiment configuration: a flat `key = value` file. Keys are
/// `system`, `seed`, `output_dir`, `jobs`, `analyses`, `step`, the chosen
/// system's parameters, and `<analysis>.<parameter>` for each requested
/// analysis. `values` holds every key after defaults are filled in.
struct ExperimentConfig {
  std::string system;
  std::uint64_t seed = 1;
  std::string output_dir = "aflow_out";
  int jobs = 1;
  std::vector<std::string> analyses;
  std::map<std::string, std::string> values;

  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  long integer(const std::string& key) const;
};

/// Parses and resolves a config. Throws ConfigValidationError naming the
/// offending key and line.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Re-validates after command-line overrides of seed, output dir or jobs.
void apply_overrides(ExperimentConfig& cfg, const std::map<std::string, std::string>& overrides);

struct SystemInfo {
  std::string name;
  std::string anchor;
  std::string description;
  std::vector<std::pair<std::string, std::string>> defaults;
};

/// The fixed registry of named constructions.
const std::vector<SystemInfo>& system_catalog();
std::string list_systems_text();
/// Analyses and their default parameters.
const std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>>& analysis_catalog();

struct AnalysisOutcome {
  std::string name;
  bool passed = false;
  std::string report_json;  // serialized report
  std::string report_file;
  std::vector<std::string> extra_files;
};

struct RunResult {
  int exit_code = 0;
  std::vector<AnalysisOutcome> outcomes;
  std::vector<std::string> failed;
  std::string manifest_json;
};

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitConfig = 2, kExitCheckFailed = 3 };

/// Builds the system, runs each analysis and, when write_files is set,
/// writes manifest.json, <analysis>.json and any CSV clouds to output_dir.
RunResult run_experiment(const ExperimentConfig& cfg, bool write_files = true);

/// Builds a named system with the config's parameters.
SmoothSystem build_named_system(const ExperimentConfig& cfg);

/// CSV with header `chart_id,c1,...,cK`; coordinates printed to round-trip.
std::string format_cloud_csv(const SmoothSystem& sys, const std::vector<State>& points);
std::vector<ChartedPoint> parse_cloud_csv(const std::string& text);

}  // namespace aflow
