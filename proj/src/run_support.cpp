#include "run_support.hpp"

#include <cmath>
#include <fmt/format.h>
#include <iterator>
#include <limits>
#include <sstream>

#include "mdlab/error.hpp"

namespace mdlab::detail {

std::string trajectory_header(int dim, bool coupled) {
  std::string h = "trial,step";
  for (int k = 0; k < dim; ++k) fmt::format_to(std::back_inserter(h), ",coord{}", k);
  h += ",inst_loss,grad_dual_norm";
  if (coupled) h += ",coupled,projection_active";
  h += '\n';
  return h;
}

void append_coords(std::string& out, const Vector& w) {
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    fmt::format_to(std::back_inserter(out), ",{:.17g}", w[k]);
  }
}

void append_md_rows(std::string& out, int trial, const MdTrajectory& traj) {
  auto it = std::back_inserter(out);
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const StepRecord& rec = traj.steps[i];
    fmt::format_to(it, "{},{}", trial, i);
    append_coords(out, rec.w);
    fmt::format_to(it, ",{:.17g},{:.17g}\n", rec.inst_loss, rec.grad_dual_norm);
  }
  fmt::format_to(it, "{},{}", trial, traj.steps.size());
  append_coords(out, traj.final_w);
  out += ",,\n";
}

void append_coupled_rows(std::string& out, int trial, const CoupledTrajectory& traj) {
  auto it = std::back_inserter(out);
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    const CoupledRecord& rec = traj.records[i];
    fmt::format_to(it, "{},{}", trial, i);
    append_coords(out, rec.step.w);
    fmt::format_to(it, ",{:.17g},{:.17g},{},{}\n", rec.step.inst_loss, rec.step.grad_dual_norm,
                   rec.coupled ? 1 : 0, rec.projection_active ? 1 : 0);
  }
  fmt::format_to(it, "{},{}", trial, traj.records.size());
  append_coords(out, traj.final_w);
  fmt::format_to(it, ",,,{},{}\n", traj.final_coupled ? 1 : 0,
                 traj.final_projection_active ? 1 : 0);
}

// inst_loss is the squared TD error / 2 and grad_dual_norm is |G(w_i)|.
void append_td_rows(std::string& out, int trial, const TdTrajectory& traj) {
  auto it = std::back_inserter(out);
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    const TdRecord& rec = traj.records[i];
    const TdTriple& z = rec.triple;
    const double err = (z.x - traj.gamma * z.x_next).dot(rec.w) - z.r;
    fmt::format_to(it, "{},{}", trial, i);
    append_coords(out, rec.w);
    fmt::format_to(it, ",{:.17g},{:.17g},{},{}\n", 0.5 * err * err, std::abs(err) * z.x.norm(),
                   rec.coupled ? 1 : 0, rec.projection_active ? 1 : 0);
  }
  fmt::format_to(it, "{},{}", trial, traj.records.size());
  append_coords(out, traj.final_w);
  fmt::format_to(it, ",,,{},{}\n", traj.final_coupled ? 1 : 0,
                 traj.final_projection_active ? 1 : 0);
}

std::string ledger_text(std::span<const LedgerEntry> ledger, int trial) {
  std::ostringstream os;
  write_ledger_csv(os, ledger, trial, false);
  return os.str();
}

// --- json -------------------------------------------------------------------

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

json to_json(const CheckReport& r) {
  json j{{"checker", r.checker},
         {"passed", r.passed},
         {"violations", r.violations},
         {"worst_slack", r.worst_slack}};
  if (r.first_violation_step) {
    j["first_violation_step"] = *r.first_violation_step;
    j["first_violation"] = r.first_violation;
  }
  return j;
}

json to_json(const ViolationStats& s) {
  return {{"trials", s.trials},     {"violations", s.violations}, {"fraction", s.fraction},
          {"wilson_lo", s.wilson.lo}, {"wilson_hi", s.wilson.hi}, {"budget", s.budget},
          {"passed", s.passed}};
}

json to_json(const BoundReport& r, double t) {
  json j{{"theorem", r.theorem},
         {"eta_ceiling", r.eta_ceiling},
         {"eta", r.eta},
         {"B_w", r.b_w},
         {"failure_budget", r.failure_budget},
         {"lhs_bregman_weight", r.lhs_bregman_weight},
         {"lhs_prediction_weight", r.lhs_prediction_weight},
         {"inputs", r.inputs_echo},
         {"warnings", r.warnings}};
  if (r.b) j["B"] = *r.b;
  if (r.rhs_at) {
    json rhs = json::object();
    for (double i : {1.0, std::floor(t / 2.0), t}) {
      if (i >= 1.0) rhs[fmt::format("{:g}", i)] = r.rhs_at(i);
    }
    j["rhs_at"] = rhs;
  }
  return j;
}

json to_json(const Comparator& c) {
  json j{{"w_ref", to_json(c.w_ref)},
         {"excess_risk", c.excess_risk},
         {"bregman_to_w0", c.bregman_to_w0},
         {"provenance", provenance_name(c.provenance)},
         {"diagnostics", c.diagnostics},
         {"warnings", c.warnings}};
  if (c.risk) j["risk"] = *c.risk;
  if (c.risk_ceiling) j["risk_ceiling"] = *c.risk_ceiling;
  return j;
}

// --- checks -----------------------------------------------------------------

CheckOutcome sure_check(std::string name, const std::vector<CheckReport>& reports, bool gating) {
  CheckOutcome c;
  c.name = std::move(name);
  c.kind = "sure";
  c.gating = gating;
  long violations = 0;
  int failing = 0;
  double worst = std::numeric_limits<double>::infinity();
  json first;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const CheckReport& r = reports[i];
    violations += r.violations;
    worst = std::min(worst, r.worst_slack);
    if (!r.passed) {
      if (failing == 0) {
        first = {{"trial", i}, {"step", r.first_violation_step.value_or(-1)},
                 {"what", r.first_violation}};
      }
      ++failing;
    }
  }
  c.passed = failing == 0;
  c.detail = fmt::format("{} trajectories, {} with violations ({} total), worst scaled slack {:.3g}",
                         reports.size(), failing, violations, worst);
  c.data = {{"trajectories", reports.size()},
            {"failing_trajectories", failing},
            {"violations", violations},
            {"worst_slack", worst}};
  if (!first.is_null()) c.data["first_violation"] = first;
  return c;
}

CheckOutcome stat_check(std::string name, const ViolationStats& stats, bool gating,
                        std::string note) {
  CheckOutcome c;
  c.name = std::move(name);
  c.kind = "statistical";
  c.gating = gating;
  c.passed = stats.passed;
  c.detail = fmt::format("{}/{} trials violated, Wilson [{:.4g}, {:.4g}] vs budget {:.4g}",
                         stats.violations, stats.trials, stats.wilson.lo, stats.wilson.hi,
                         stats.budget);
  if (!note.empty()) c.detail += "; " + note;
  c.data = to_json(stats);
  return c;
}

CheckOutcome numeric_check(std::string name, bool passed, std::string detail, json data,
                           std::string kind) {
  CheckOutcome c;
  c.name = std::move(name);
  c.kind = std::move(kind);
  c.passed = passed;
  c.detail = std::move(detail);
  c.data = std::move(data);
  return c;
}

double resolve_eta(const ExperimentConfig& cfg, double ceiling) {
  const double eta = cfg.eta.value_or(ceiling) * cfg.eta_scale;
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw ConfigError(fmt::format("step size {} is not positive", eta), "run.eta");
  }
  return eta;
}

double resolve_delta(const ExperimentConfig& cfg, double budget_per_delta, double target) {
  if (cfg.delta) return *cfg.delta;
  return std::min(0.5, target / budget_per_delta);
}

json config_json(const ExperimentConfig& cfg) {
  json j{{"experiment", cfg.experiment}, {"seed", cfg.seed},       {"trials", cfg.trials},
         {"t", cfg.t},                   {"eta_scale", cfg.eta_scale}};
  j["eta"] = cfg.eta ? json(*cfg.eta) : json(nullptr);
  j["delta"] = cfg.delta ? json(*cfg.delta) : json(nullptr);
  json params = json::object();
  for (const auto& p : find_experiment(cfg.experiment).params) params[p.name] = cfg.param(p.name);
  j["params"] = params;
  return j;
}

// --- stochastic MD cloud ----------------------------------------------------

namespace {

struct TrialRun {
  std::string rows;
  std::string ledger;
  CheckReport sure;
  std::optional<TrialSummary> summary;
  std::vector<Vector> points;
  Vector final_w;
  bool finite = true;
};

}  // namespace

Cloud md_cloud(const ExperimentConfig& cfg, const CloudSpec& spec) {
  if (!spec.source) throw DomainError("md_cloud: no source");
  auto runs = parallel_trials(cfg.jobs, cfg.trials, [&](int trial) {
    TrialRun out;
    SampleStream stream(*spec.source, Rng(cfg.seed, static_cast<std::uint32_t>(trial),
                                          StreamRole::samples));
    const MdTrajectory traj =
        run_stochastic_md(spec.geom, spec.loss, stream, spec.w0, spec.eta, spec.t);
    const std::vector<double> ref = losses_at_reference(spec.loss, traj, spec.w_ref);
    out.sure = check_det_md(spec.geom, traj, ref, spec.w_ref);
    if (spec.dump_trials < 0 || trial < spec.dump_trials) append_md_rows(out.rows, trial, traj);
    out.final_w = traj.final_w;
    for (std::size_t i = 0; i <= traj.length(); ++i) {
      if (!traj.iterate(i).allFinite()) out.finite = false;
    }
    if (spec.keep_points) {
      for (std::size_t i = 0; i <= traj.length(); ++i) out.points.push_back(traj.iterate(i));
    }
    if (spec.risk && spec.bound) {
      std::vector<Vector> iterates;
      std::vector<double> risks;
      iterates.reserve(traj.length() + 1);
      for (std::size_t i = 0; i <= traj.length(); ++i) iterates.push_back(traj.iterate(i));
      for (std::size_t i = 0; i < traj.length(); ++i) risks.push_back(spec.risk(iterates[i]));
      const auto ledger = average_risk_ledger(spec.geom, iterates, risks, spec.w_ref, *spec.bound);
      out.ledger = ledger_text(ledger, trial);
      double mean = 0.0;
      for (double r : risks) mean += r;
      mean /= std::max<std::size_t>(1, risks.size());
      out.summary = summarize_trial(trial, ledger, false,
                                    bregman_div(spec.geom, spec.w_ref, traj.final_w), mean);
    }
    return out;
  });
  Cloud c;
  for (auto& r : runs) {
    c.trajectories += r.rows;
    c.ledger += r.ledger;
    c.sure.push_back(std::move(r.sure));
    if (r.summary) c.summaries.push_back(*r.summary);
    for (auto& p : r.points) c.points.push_back(std::move(p));
    c.finals.push_back(std::move(r.final_w));
    c.all_finite = c.all_finite && r.finite;
  }
  return c;
}

std::string hexbin_text(std::span<const Vector> points, double radius, json* meta) {
  if (!(radius > 0.0)) throw ConfigError("hexbin radius must be positive", "source.hex_radius");
  Rect box{INFINITY, -INFINITY, INFINITY, -INFINITY};
  for (const auto& p : points) {
    if (p.size() != 2) throw DomainError("hexbin_text: points must be two-dimensional");
    box.x_min = std::min(box.x_min, p[0]);
    box.x_max = std::max(box.x_max, p[0]);
    box.y_min = std::min(box.y_min, p[1]);
    box.y_max = std::max(box.y_max, p[1]);
  }
  if (points.empty()) box = Rect{};
  box.x_min -= radius;
  box.x_max += radius;
  box.y_min -= radius;
  box.y_max += radius;
  const auto cells = hexbin_aggregate(points, radius, box);
  std::ostringstream os;
  write_hexbin_csv(os, cells);
  if (meta) {
    long total = 0;
    for (const auto& cell : cells) total += cell.count;
    *meta = {{"radius", radius},
             {"bounds", {box.x_min, box.x_max, box.y_min, box.y_max}},
             {"cells", cells.size()},
             {"points", total}};
  }
  return os.str();
}

DiscreteDistribution two_cluster(const ExperimentConfig& cfg) {
  DiscreteDistribution d = two_cluster_default();
  const double likely = cfg.param("likely_prob");
  if (!(likely > 0.0 && likely < 1.0)) {
    throw ConfigError("likely_prob must lie in (0, 1)", "source.likely_prob");
  }
  d.probs = {likely / 2.0, likely / 2.0, (1.0 - likely) / 2.0, (1.0 - likely) / 2.0};
  d.validate();
  return d;
}

}  // namespace mdlab::detail
