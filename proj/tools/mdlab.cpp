// mdlab: run the named experiments and write their artifacts.
//
// Exit codes: 0 all gating checks passed, 1 a checker failed, 2 usage or
// configuration error, 3 runtime error.

#include <CLI11.hpp>
#include <cstdio>
#include <fmt/format.h>
#include <iostream>
#include <nlohmann/json.hpp>

#include "mdlab/error.hpp"
#include "mdlab/experiments.hpp"

namespace {

int cmd_list(bool as_json) {
  const auto& table = mdlab::experiment_table();
  if (as_json) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : table) {
      nlohmann::json params = nlohmann::json::object();
      for (const auto& p : e.params) params[p.name] = p.value;
      arr.push_back({{"name", e.name},
                     {"anchor", e.anchor},
                     {"summary", e.summary},
                     {"trials", e.trials},
                     {"t", e.t},
                     {"eta", e.eta ? nlohmann::json(*e.eta) : nlohmann::json("ceiling")},
                     {"params", params}});
    }
    std::cout << arr.dump(2) << '\n';
    return 0;
  }
  fmt::print("{:<15} {:<45} {:>6} {:>6} {:>8}  {}\n", "experiment", "anchor", "trials", "t", "eta",
             "params");
  for (const auto& e : table) {
    std::string params;
    for (const auto& p : e.params) {
      params += fmt::format("{}{}={:g}", params.empty() ? "" : " ", p.name, p.value);
    }
    fmt::print("{:<15} {:<45} {:>6} {:>6} {:>8}  {}\n", e.name, e.anchor, e.trials, e.t,
               e.eta ? fmt::format("{:g}", *e.eta) : "ceiling", params);
  }
  return 0;
}

void print_checks(const mdlab::ExperimentResult& res) {
  for (const auto& c : res.checks) {
    const char* status = c.passed ? "PASS" : (c.gating ? "FAIL" : "info");
    fmt::print("  [{}] {:<12} {}: {}\n", status, c.kind, c.name, c.detail);
  }
}

void print_constants(const nlohmann::json& report) {
  if (!report.contains("bound")) return;
  const auto& b = report["bound"];
  fmt::print("  bound {}: eta_ceiling = {:.6g}, eta = {:.6g}, B_w = {:.6g}, budget = {:.4g}\n",
             b.value("theorem", ""), b.value("eta_ceiling", 0.0), b.value("eta", 0.0),
             b.value("B_w", 0.0), b.value("failure_budget", 0.0));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mirror descent / TD / mirror flow verification lab"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run one experiment");
  std::string experiment, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials, t, jobs;
  std::optional<double> eta, eta_scale, delta;
  run->add_option("experiment", experiment, "experiment name (see `mdlab list`)")->required();
  run->add_option("--seed", seed, "master seed");
  run->add_option("--trials", trials, "number of trials");
  run->add_option("--t", t, "horizon");
  run->add_option("--eta", eta, "step size (default: the theorem ceiling)");
  run->add_option("--eta-scale", eta_scale, "multiplier applied to the step size");
  run->add_option("--delta", delta, "failure probability");
  run->add_option("--jobs", jobs, "worker threads (0: all cores)");
  run->add_option("--config", config_path, "INI or JSON config file");
  run->add_option("--out", out_dir, "output root (default $MDLAB_OUT or ./mdlab_out)");

  auto* list = app.add_subcommand("list", "list experiments");
  bool as_json = false;
  list->add_flag("--json", as_json, "machine-readable output");

  app.add_subcommand("check-losses", "run the loss property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (list->parsed()) return cmd_list(as_json);

    if (app.got_subcommand("check-losses")) {
      const auto res = mdlab::run_experiment(mdlab::default_config("loss_props"));
      print_checks(res);
      fmt::print("{}\n", res.passed() ? "all loss properties hold" : "loss property check FAILED");
      return res.passed() ? 0 : 1;
    }

    mdlab::ExperimentConfig cfg = mdlab::default_config(experiment);
    if (!config_path.empty()) cfg = mdlab::load_config(config_path, cfg);
    if (seed) cfg.seed = *seed;
    if (trials) cfg.trials = *trials;
    if (t) cfg.t = *t;
    if (eta) cfg.eta = *eta;
    if (eta_scale) cfg.eta_scale = *eta_scale;
    if (delta) cfg.delta = *delta;
    if (jobs) cfg.jobs = *jobs;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    cfg.validate();

    const auto res = mdlab::run_experiment(cfg);
    const auto dir = mdlab::write_artifacts(res, mdlab::resolve_output_root(cfg));
    fmt::print("{} ({})\n", res.experiment, res.report.value("anchor", ""));
    print_constants(res.report);
    print_checks(res);
    if (!res.passed()) {
      fmt::print(stderr, "checker failure; see {}\n", (dir / "report.json").string());
      return 1;
    }
    fmt::print("artifacts in {}\n", dir.string());
    return 0;
  } catch (const mdlab::ConfigError& e) {
    fmt::print(stderr, "mdlab: {}: {}\n", e.where(), e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "mdlab: {}\n", e.what());
    return 3;
  }
}
