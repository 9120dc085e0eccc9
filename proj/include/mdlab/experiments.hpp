#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mdlab {

struct ParamSpec {
  std::string name;
  double value = 0.0;
  std::string help;
};

struct ExperimentInfo {
  std::string name;
  std::string anchor;  // theorem / proposition / lemma label the experiment exercises
  std::string summary;
  int trials = 1;
  int t = 1;
  std::optional<double> eta;    // empty: the theorem's ceiling
  std::optional<double> delta;  // empty: chosen so that the failure budget is 0.05
  std::vector<ParamSpec> params;
};

// Stable order; one row per experiment.
const std::vector<ExperimentInfo>& experiment_table();
// Throws ConfigError for unknown names.
const ExperimentInfo& find_experiment(std::string_view name);

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 7;
  int trials = 1;
  int t = 1;
  std::optional<double> eta;
  double eta_scale = 1.0;
  std::optional<double> delta;
  int jobs = 1;  // 0: one worker per hardware thread
  std::map<std::string, double> source_overrides;
  std::optional<std::filesystem::path> output_dir;

  // Throws ConfigError naming the offending field.
  void validate() const;
  // Experiment parameter, after overrides.
  double param(const std::string& name) const;
};

ExperimentConfig default_config(const std::string& experiment);

// Reads `key = value` INI (sections [run] and [source]) or JSON with the same
// layout, on top of `base`. The experiment named in the file, if any, replaces
// base.experiment and resets the defaults. Throws ConfigError with the line or
// field at fault.
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

struct CheckOutcome {
  std::string name;
  std::string kind;     // sure | statistical | numeric | claim
  bool gating = true;   // informational checks never affect the exit status
  bool passed = false;
  std::string detail;
  nlohmann::json data;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<CheckOutcome> checks;
  nlohmann::json report;
  std::map<std::string, std::string> files;  // artifact name -> contents

  bool passed() const;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// `--out`, then the config file, then $MDLAB_OUT, then ./mdlab_out.
std::filesystem::path resolve_output_root(const ExperimentConfig& config);

// Writes every artifact under root/<experiment>/ and returns that directory.
std::filesystem::path write_artifacts(const ExperimentResult& result,
                                      const std::filesystem::path& root);

// Formatting used by every CSV writer: "{:.17g}".
std::string fmt_num(double v);

}  // namespace mdlab
