#include "mdlab/experiments.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/json_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>

#include "mdlab/error.hpp"
#include "run_support.hpp"

namespace mdlab {

std::string fmt_num(double v) { return fmt::format("{:.17g}", v); }

const std::vector<ExperimentInfo>& experiment_table() {
  static const std::vector<ExperimentInfo> table = {
      {"fig1_sq", "Lemma fact:md (fig:lsq)", "two-cluster squared-loss SGD cloud", 100, 400, 0.1,
       std::nullopt,
       {{"likely_prob", 0.9, "total mass of the two likely points"}}},
      {"fig1_log", "Lemma fact:md (fig:log)", "two-cluster logistic SGD cloud with hexbin", 100, 400,
       1.0, std::nullopt,
       {{"likely_prob", 0.9, "total mass of the two likely points"},
        {"hex_radius", 0.1, "hexagon circumradius"}}},
      {"fig2_hexbin", "Prop. margin:zero (fig:intro:hexbin)",
       "hexbinned SGD iterates: two-cluster and sphere logistic", 100, 400, 1.0, std::nullopt,
       {{"likely_prob", 0.9, "total mass of the two likely points"},
        {"hex_radius", 0.1, "hexagon circumradius, two-cluster panel"},
        {"sphere_hex_radius", 0.1, "hexagon circumradius, sphere panel"}}},
      {"sphere_prop", "Prop. margin:zero", "sphere-law risk formula, sampler and SGD run", 20, 1000,
       1.0, std::nullopt,
       {{"dim", 2, "ambient dimension of the SGD run"},
        {"mc_draws", 1e5, "sampler sanity draws"}}},
      {"margin_prop", "Prop. md:margin", "margin comparator risk ceiling", 20, 100, 1.0,
       std::nullopt,
       {{"gamma", 0.5, "hard margin of the test law, in (0, 0.8]"},
        {"mc_draws", 1e6, "Monte Carlo draws for the risk of w_ref"},
        {"calibration", 1e5, "calibration sample for the margin estimate"}}},
      {"realizable_thm", "Thm. md:realizable", "realizable ledger on a separable law", 200, 400,
       std::nullopt, std::nullopt,
       {{"gamma", 0.5, "hard margin of the separable law"}}},
      {"general_thm", "Thm. md:general", "coupling and average-risk ledger, two-cluster logistic",
       200, 400, std::nullopt, std::nullopt,
       {{"likely_prob", 0.9, "total mass of the two likely points"},
        {"stickiness", 0.0, "chain self-loop weight; 0 gives IID draws"},
        {"lambda", 0.0, "u_ref regularization; 0 means 1/sqrt(t)"}}},
      {"td_thm", "Thm. td", "TD(0) ledger and coupling against the fixed point", 200, 1000,
       std::nullopt, std::nullopt,
       {{"gamma", 0.5, "discount"},
        {"states", 2, "chain size: 2 or 5"},
        {"reward_noise", 0.0, "uniform reward noise half-width"}}},
      {"heavy_thm", "Thm. md:heavy", "heavy-tailed squared-loss SGD", 100, 1000, std::nullopt,
       std::nullopt,
       {{"kind", 1, "0 subgaussian, 1 polynomial"},
        {"p", 8, "polynomial moment order (multiple of 8)"},
        {"moment", 10, "polynomial moment bound M"},
        {"sigma", 1, "subgaussian scale"},
        {"dim", 2, "dimension"}}},
      {"batch_thm", "Thm. md:batch", "full-batch MD on sampled datasets", 50, 400, std::nullopt,
       std::nullopt,
       {{"likely_prob", 0.9, "total mass of the two likely points"},
        {"n", 400, "dataset size"}}},
      {"flow_thm", "Thm. mf:batch", "mirror flow identity and ledger; t is the RK4 step count", 10,
       1000, std::nullopt, std::nullopt,
       {{"likely_prob", 0.9, "total mass of the two likely points"},
        {"n", 1000, "dataset size"},
        {"horizon", 0.0, "flow horizon; 0 means the theorem ceiling"}}},
      {"uref_check", "Prop. uref", "regularized comparator claim on two-cluster laws", 1, 400,
       std::nullopt, std::nullopt,
       {{"likely_prob", 0.9, "total mass of the two likely points"}}},
      {"svt_demo", "Thm. md:general (squared-loss SVT example)",
       "thresholded least-squares comparators", 1, 1, std::nullopt, std::nullopt,
       {{"rotation", 0.3, "angle of the eigenbasis rotation"},
        {"label_noise", 0.05, "label offset added to every support point"}}},
      {"median_demo", "Thm. md:general (univariate medians)", "sign-step SGD toward a median", 100,
       10000, 0.01, std::nullopt,
       {{"low", -0.8, "smallest support value"},
        {"mid", 0.3037, "middle support value"},
        {"high", 0.9, "largest support value"},
        {"p_low", 0.15, "mass of the smallest value"},
        {"p_mid", 0.75, "mass of the middle value"},
        {"dump_trials", 10, "trials written to trajectories.csv"}}},
      {"loss_props", "Lemma fact:self-bounding", "loss property checks on the default grids", 1, 1,
       std::nullopt, std::nullopt, {}},
  };
  return table;
}

const ExperimentInfo& find_experiment(std::string_view name) {
  for (const auto& e : experiment_table()) {
    if (e.name == name) return e;
  }
  throw ConfigError(fmt::format("unknown experiment '{}'", name), "run.experiment");
}

void ExperimentConfig::validate() const {
  const ExperimentInfo& info = find_experiment(experiment);
  if (trials < 1) throw ConfigError("trials must be at least 1", "run.trials");
  if (t < 1) throw ConfigError("t must be at least 1", "run.t");
  if (eta && !(*eta > 0.0 && std::isfinite(*eta))) {
    throw ConfigError("eta must be positive", "run.eta");
  }
  if (!(eta_scale > 0.0 && std::isfinite(eta_scale))) {
    throw ConfigError("eta_scale must be positive", "run.eta_scale");
  }
  if (delta && !(*delta > 0.0 && *delta < 1.0)) {
    throw ConfigError("delta must lie in (0, 1)", "run.delta");
  }
  if (jobs < 0) throw ConfigError("jobs must be nonnegative", "run.jobs");
  for (const auto& [key, value] : source_overrides) {
    bool known = false;
    for (const auto& p : info.params) known = known || p.name == key;
    if (!known) {
      throw ConfigError(fmt::format("experiment {} has no parameter '{}'", experiment, key),
                        "source." + key);
    }
    if (!std::isfinite(value)) {
      throw ConfigError(fmt::format("parameter '{}' is not finite", key), "source." + key);
    }
  }
}

double ExperimentConfig::param(const std::string& name) const {
  if (auto it = source_overrides.find(name); it != source_overrides.end()) return it->second;
  for (const auto& p : find_experiment(experiment).params) {
    if (p.name == name) return p.value;
  }
  throw ConfigError(fmt::format("experiment {} has no parameter '{}'", experiment, name),
                    "source." + name);
}

ExperimentConfig default_config(const std::string& experiment) {
  const ExperimentInfo& info = find_experiment(experiment);
  ExperimentConfig c;
  c.experiment = info.name;
  c.trials = info.trials;
  c.t = info.t;
  c.eta = info.eta;
  c.delta = info.delta;
  return c;
}

namespace {

namespace pt = boost::property_tree;

// 1-based line of the first `key = ...` in an INI text, for error messages.
std::string where_in(const std::string& text, bool json_format, const std::string& section,
                     const std::string& key) {
  const std::string field = section + "." + key;
  if (json_format) return field;
  const bool header = key == section;
  std::istringstream is(text);
  std::string line, current;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '[') {
      const auto close = line.find(']', first);
      current = line.substr(first + 1, close == std::string::npos ? std::string::npos : close - first - 1);
      if (header && current == section) return fmt::format("line {} (section {})", n, section);
      continue;
    }
    if (header || current != section || line.compare(first, key.size(), key) != 0) continue;
    const auto rest = line.find_first_not_of(" \t", first + key.size());
    if (rest != std::string::npos && line[rest] == '=') return fmt::format("line {} ({})", n, field);
  }
  return field;
}

template <class T>
T parse_as(const std::string& raw, const std::string& where) {
  std::istringstream is(raw);
  T v{};
  is >> v;
  if (is.fail() || !(is >> std::ws).eof()) {
    throw ConfigError(fmt::format("cannot parse '{}'", raw), where);
  }
  return v;
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()), path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  const bool json_format =
      path.extension() == ".json" || (first != std::string::npos && text[first] == '{');

  pt::ptree tree;
  try {
    std::istringstream is(text);
    if (json_format) {
      pt::read_json(is, tree);
    } else {
      pt::read_ini(is, tree);
    }
  } catch (const pt::file_parser_error& e) {
    throw ConfigError(e.message(), fmt::format("line {}", e.line()));
  }

  ExperimentConfig cfg = std::move(base);
  for (const auto& [section, body] : tree) {
    if (section != "run" && section != "source") {
      throw ConfigError(fmt::format("unknown section '{}'", section),
                        json_format ? section : where_in(text, false, section, section));
    }
    if (section == "run") {
      if (auto e = body.get_optional<std::string>("experiment")) {
        if (cfg.experiment.empty()) {
          cfg = default_config(*e);
        } else if (*e != cfg.experiment) {
          throw ConfigError(fmt::format("config names experiment '{}' but '{}' was requested", *e,
                                        cfg.experiment),
                            where_in(text, json_format, "run", "experiment"));
        }
      }
    }
  }
  if (cfg.experiment.empty()) throw ConfigError("no experiment named", "run.experiment");

  for (const auto& [section, body] : tree) {
    for (const auto& [key, node] : body) {
      const std::string raw = node.get_value<std::string>();
      const std::string where = where_in(text, json_format, section, key);
      if (section == "source") {
        cfg.source_overrides[key] = parse_as<double>(raw, where);
        continue;
      }
      if (key == "experiment") continue;
      if (key == "seed") {
        cfg.seed = parse_as<std::uint64_t>(raw, where);
      } else if (key == "trials") {
        cfg.trials = parse_as<int>(raw, where);
      } else if (key == "t") {
        cfg.t = parse_as<int>(raw, where);
      } else if (key == "eta") {
        cfg.eta = parse_as<double>(raw, where);
      } else if (key == "eta_scale") {
        cfg.eta_scale = parse_as<double>(raw, where);
      } else if (key == "delta") {
        cfg.delta = parse_as<double>(raw, where);
      } else if (key == "jobs") {
        cfg.jobs = parse_as<int>(raw, where);
      } else if (key == "out") {
        cfg.output_dir = std::filesystem::path(raw);
      } else {
        throw ConfigError(fmt::format("unknown field '{}'", key), where);
      }
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    const auto dot = e.where().find('.');
    if (dot == std::string::npos) throw;
    throw ConfigError(e.what(), where_in(text, json_format, e.where().substr(0, dot),
                                         e.where().substr(dot + 1)));
  }
  return cfg;
}

bool ExperimentResult::passed() const {
  for (const auto& c : checks) {
    if (c.gating && !c.passed) return false;
  }
  return true;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const ExperimentInfo& info = find_experiment(config.experiment);
  ExperimentResult res;
  res.experiment = config.experiment;
  res.report = {{"experiment", info.name}, {"anchor", info.anchor},
                {"config", detail::config_json(config)}};

  const std::string& e = config.experiment;
  if (e == "fig1_sq") {
    detail::exp_fig1(config, res, Loss::squared(), false);
  } else if (e == "fig1_log") {
    detail::exp_fig1(config, res, Loss::logistic(), true);
  } else if (e == "fig2_hexbin") {
    detail::exp_fig2(config, res);
  } else if (e == "sphere_prop") {
    detail::exp_sphere_prop(config, res);
  } else if (e == "margin_prop") {
    detail::exp_margin_prop(config, res);
  } else if (e == "realizable_thm") {
    detail::exp_realizable(config, res);
  } else if (e == "general_thm") {
    detail::exp_general(config, res);
  } else if (e == "td_thm") {
    detail::exp_td(config, res);
  } else if (e == "heavy_thm") {
    detail::exp_heavy(config, res);
  } else if (e == "batch_thm") {
    detail::exp_batch(config, res);
  } else if (e == "flow_thm") {
    detail::exp_flow(config, res);
  } else if (e == "uref_check") {
    detail::exp_uref(config, res);
  } else if (e == "svt_demo") {
    detail::exp_svt(config, res);
  } else if (e == "median_demo") {
    detail::exp_median(config, res);
  } else {
    detail::exp_loss_props(config, res);
  }

  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : res.checks) {
    checks.push_back({{"name", c.name},
                      {"kind", c.kind},
                      {"gating", c.gating},
                      {"passed", c.passed},
                      {"detail", c.detail},
                      {"data", c.data}});
  }
  res.report["checks"] = checks;
  res.report["passed"] = res.passed();
  res.files["report.json"] = res.report.dump(2) + "\n";
  return res;
}

std::filesystem::path resolve_output_root(const ExperimentConfig& config) {
  if (config.output_dir) return *config.output_dir;
  if (const char* env = std::getenv("MDLAB_OUT"); env && *env) return env;
  return "mdlab_out";
}

std::filesystem::path write_artifacts(const ExperimentResult& result,
                                      const std::filesystem::path& root) {
  const std::filesystem::path dir = root / result.experiment;
  std::filesystem::create_directories(dir);
  for (const auto& [name, contents] : result.files) {
    std::ofstream os(dir / name, std::ios::binary | std::ios::trunc);
    os << contents;
    if (!os) throw Error(fmt::format("cannot write {}", (dir / name).string()));
  }
  return dir;
}

}  // namespace mdlab
