// Stochastic and batch mirror-descent experiments.

#include <cmath>
#include <fmt/format.h>
#include <iterator>
#include <numbers>

#include "mdlab/error.hpp"
#include "run_support.hpp"

namespace mdlab::detail {

namespace {

LedgerEntry plain_entry(int step, double lhs, double rhs) {
  LedgerEntry e;
  e.step = step;
  e.lhs = lhs;
  e.rhs = rhs;
  e.slack = rhs - lhs;
  e.violated = e.slack < 0.0;
  return e;
}

bool applicable(const BoundReport& b) { return b.eta <= b.eta_ceiling; }

std::string ceiling_note(const BoundReport& b) {
  if (applicable(b)) return {};
  return fmt::format("eta = {:.4g} above the ceiling {:.4g}; informational only", b.eta,
                     b.eta_ceiling);
}

struct TwoClusterRun {
  FiniteRisk risk;
  Comparator cmp;
  BoundReport bound;
  double eta = 0.0;
  Cloud cloud;
};

// Stochastic MD on the two-cluster law against u_ref(1/sqrt(t)), with the
// general-theorem ledger evaluated at the run's step size.
TwoClusterRun two_cluster_run(const ExperimentConfig& cfg, const Loss& loss, bool keep_points,
                              const DataSource& src) {
  const MirrorGeometry geom = MirrorGeometry::euclidean();
  const auto& dist = std::get<DiscreteDistribution>(src);
  FiniteRisk risk = FiniteRisk::of(loss, dist);
  const Vector w0 = Vector::Zero(2);
  const double t = cfg.t;
  Comparator cmp = solve_u_ref(geom, risk, w0, 1.0 / std::sqrt(t));

  GeneralInputs gi;
  gi.c1 = loss.qb().c1;
  gi.c2 = loss.qb().c2;
  gi.d0 = cmp.bregman_to_w0;
  gi.norm_wref = cmp.w_ref.norm();
  gi.r_wref = risk.value(cmp.w_ref);
  gi.excess_wref = cmp.excess_risk;
  gi.delta = resolve_delta(cfg, t);
  gi.t = t;
  const double ceiling = general_bound(gi).eta_ceiling;
  gi.eta = resolve_eta(cfg, ceiling);
  BoundReport bound = general_bound(gi);

  CloudSpec spec;
  spec.geom = geom;
  spec.loss = loss;
  spec.source = &src;
  spec.w0 = w0;
  spec.w_ref = cmp.w_ref;
  spec.eta = bound.eta;
  spec.t = cfg.t;
  spec.risk = [&risk](const Vector& w) { return risk.value(w); };
  spec.bound = &bound;
  spec.keep_points = keep_points;
  Cloud cloud = md_cloud(cfg, spec);
  const double eta = bound.eta;
  return TwoClusterRun{std::move(risk), std::move(cmp), std::move(bound), eta, std::move(cloud)};
}

// Population GD at the run's step size, then the regularization path u_ref(lambda).
std::string reference_paths(const FiniteRisk& risk, double eta, int t) {
  const MirrorGeometry geom = MirrorGeometry::euclidean();
  std::string out = "path,index,coord0,coord1,risk\n";
  auto it = std::back_inserter(out);
  Vector w = Vector::Zero(risk.dim());
  for (int i = 0; i <= t; ++i) {
    const LossGrad lg = risk.value_grad(w);
    fmt::format_to(it, "population_gd,{}", i);
    append_coords(out, w);
    fmt::format_to(it, ",{:.17g}\n", lg.value);
    w -= eta * lg.grad;
  }
  int k = 0;
  for (double e = 1.0; e >= -2.0 - 1e-9; e -= 0.25, ++k) {
    const double lambda = std::pow(10.0, e);
    try {
      const Comparator c = solve_u_ref(geom, risk, Vector::Zero(risk.dim()), lambda);
      fmt::format_to(it, "regularization_path,{}", k);
      append_coords(out, c.w_ref);
      fmt::format_to(it, ",{:.17g}\n", risk.value(c.w_ref));
    } catch (const ConvergenceError&) {
      // path point skipped
    }
  }
  return out;
}

json mean_final(const Cloud& c) {
  if (c.finals.empty()) return nullptr;
  Vector m = Vector::Zero(c.finals.front().size());
  for (const auto& f : c.finals) m += f;
  return to_json(m / static_cast<double>(c.finals.size()));
}

// Separable law with hard margin gamma along e2.
DiscreteDistribution margin_law(double gamma) {
  if (!(gamma > 0.0 && gamma <= 0.8)) {
    throw ConfigError("gamma must lie in (0, 0.8]", "source.gamma");
  }
  const double c = std::sqrt(1.0 - gamma * gamma);
  DiscreteDistribution d;
  d.points = {Vector{{c, gamma}}, Vector{{-c, gamma}}, Vector{{0.6, -0.8}}, Vector{{-0.6, -0.8}}};
  d.labels = {1.0, 1.0, -1.0, -1.0};
  d.probs = {0.3, 0.3, 0.2, 0.2};
  d.validate();
  return d;
}

// Exact (1 - 1/t)-quantile margin of a finite law along u.
double exact_margin(const DiscreteDistribution& d, const Vector& u, double t) {
  std::vector<std::pair<double, double>> m;
  for (std::size_t k = 0; k < d.points.size(); ++k) {
    m.emplace_back(d.labels[k] * d.points[k].dot(u), d.probs[k]);
  }
  std::sort(m.begin(), m.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  double mass = 0.0;
  for (const auto& [g, p] : m) {
    mass += p;
    if (mass >= 1.0 - 1.0 / t - 1e-15) return g;
  }
  return m.back().first;
}

}  // namespace

void exp_fig1(const ExperimentConfig& cfg, ExperimentResult& res, const Loss& loss, bool hexbin) {
  const DataSource src = two_cluster(cfg);
  TwoClusterRun run = two_cluster_run(cfg, loss, hexbin, src);

  res.files["trajectories.csv"] = trajectory_header(2, false) + run.cloud.trajectories;
  res.files["ledger.csv"] = std::string(kLedgerHeader) + run.cloud.ledger;
  res.files["paths.csv"] = reference_paths(run.risk, run.eta, cfg.t);
  if (hexbin) {
    json meta;
    res.files["hexbin.csv"] = hexbin_text(run.cloud.points, cfg.param("hex_radius"), &meta);
    res.report["hexbin"] = meta;
  }
  res.checks.push_back(sure_check("deterministic MD lemma", run.cloud.sure));
  res.checks.push_back(stat_check("average-risk ledger",
                                  violation_stats(run.cloud.summaries, run.bound.failure_budget),
                                  applicable(run.bound), ceiling_note(run.bound)));
  res.report["eta"] = run.eta;
  res.report["loss"] = loss.name();
  res.report["risk_infimum"] = run.risk.infimum();
  res.report["comparator"] = to_json(run.cmp);
  res.report["bound"] = to_json(run.bound, cfg.t);
  res.report["mean_final_iterate"] = mean_final(run.cloud);
}

void exp_fig2(const ExperimentConfig& cfg, ExperimentResult& res) {
  const Loss loss = Loss::logistic();
  const DataSource src = two_cluster(cfg);
  TwoClusterRun run = two_cluster_run(cfg, loss, true, src);
  json meta_two, meta_sphere;
  res.files["trajectories.csv"] = trajectory_header(2, false) + run.cloud.trajectories;
  res.files["ledger.csv"] = std::string(kLedgerHeader) + run.cloud.ledger;
  res.files["hexbin.csv"] = hexbin_text(run.cloud.points, cfg.param("hex_radius"), &meta_two);

  // Negative population gradient on a grid covering the two-cluster cloud.
  {
    const auto& b = meta_two["bounds"];
    const double x0 = b[0], x1 = b[1], y0 = b[2], y1 = b[3];
    std::string field = "x,y,neg_grad_x,neg_grad_y\n";
    auto it = std::back_inserter(field);
    const int g = 25;
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        const Vector w{{x0 + (x1 - x0) * i / (g - 1), y0 + (y1 - y0) * j / (g - 1)}};
        const Vector v = -run.risk.value_grad(w).grad;
        fmt::format_to(it, "{:.17g},{:.17g},{:.17g},{:.17g}\n", w[0], w[1], v[0], v[1]);
      }
    }
    res.files["gradient_field.csv"] = field;
  }

  const DataSource sphere = SphereSource{2};
  const Comparator axis = sphere_axis_comparator(cfg.t, 2);
  CloudSpec spec;
  spec.loss = loss;
  spec.source = &sphere;
  spec.w0 = Vector::Zero(2);
  spec.w_ref = axis.w_ref;
  spec.eta = run.eta;
  spec.t = cfg.t;
  spec.keep_points = true;
  const Cloud sc = md_cloud(cfg, spec);
  res.files["trajectories_sphere.csv"] = trajectory_header(2, false) + sc.trajectories;
  res.files["hexbin_sphere.csv"] =
      hexbin_text(sc.points, cfg.param("sphere_hex_radius"), &meta_sphere);

  res.checks.push_back(sure_check("deterministic MD lemma, two-cluster", run.cloud.sure));
  res.checks.push_back(sure_check("deterministic MD lemma, sphere", sc.sure));
  res.checks.push_back(stat_check("average-risk ledger, two-cluster",
                                  violation_stats(run.cloud.summaries, run.bound.failure_budget),
                                  applicable(run.bound), ceiling_note(run.bound)));
  res.report["eta"] = run.eta;
  res.report["hexbin"] = {{"two_cluster", meta_two}, {"sphere", meta_sphere}};
  res.report["comparator"] = to_json(run.cmp);
  res.report["sphere_comparator"] = to_json(axis);
  res.report["bound"] = to_json(run.bound, cfg.t);
  res.report["mean_final_iterate"] = {{"two_cluster", mean_final(run.cloud)},
                                      {"sphere", mean_final(sc)}};
}

void exp_sphere_prop(const ExperimentConfig& cfg, ExperimentResult& res) {
  std::vector<LedgerEntry> ledger;
  bool formula_ok = true, series_ok = true;
  json rows = json::array();
  int k = 0;
  for (double r : {1.0, 2.0, 5.0, 10.0, 20.0}) {
    const double quad = sphere_risk_quadrature(r);
    const double series = sphere_risk_series(r);
    const double gap = std::abs(quad - std::numbers::pi * std::numbers::pi / (12.0 * r));
    const double allowed = 2.0 * std::exp(-r);
    formula_ok = formula_ok && gap <= allowed;
    series_ok = series_ok && std::abs(quad - series) <= 1e-8;
    ledger.push_back(plain_entry(++k, gap, allowed));
    rows.push_back({{"r", r}, {"quadrature", quad}, {"series", series}, {"gap", gap},
                    {"allowed", allowed}});
  }
  res.checks.push_back(numeric_check("|R(r e1) - pi^2/(12 r)| <= 2 e^{-r}", formula_ok,
                                     "r in {1, 2, 5, 10, 20}", rows));
  res.checks.push_back(numeric_check("quadrature agrees with the dilogarithm series", series_ok,
                                     "tolerance 1e-8"));

  // Risk along e1 decreases strictly toward 0 and is never attained.
  {
    bool ok = true;
    double prev = std::numbers::ln2;
    for (double r : {0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0}) {
      const double v = sphere_risk_exact(r);
      ok = ok && v < prev && v > 0.0;
      prev = v;
    }
    res.checks.push_back(numeric_check("risk along e1 strictly decreasing and positive", ok,
                                       "r from 0.5 to 100"));
  }

  // On the circle of radius 2, e1 is the unique minimizing direction.
  {
    const DataSource circle = SphereSource{2};
    const Loss lg = Loss::logistic();
    const double best = estimate_risk(lg, circle, Vector{{2.0, 0.0}}, RiskMode::exact()).value;
    double runner_up = INFINITY;
    for (int j = 1; j < 72; ++j) {
      const double th = 2.0 * std::numbers::pi * j / 72.0;
      const Vector w{{2.0 * std::cos(th), 2.0 * std::sin(th)}};
      runner_up = std::min(runner_up, estimate_risk(lg, circle, w, RiskMode::exact()).value);
    }
    res.checks.push_back(numeric_check(
        "e1 is the unique minimizing direction on |w| = 2", best < runner_up,
        fmt::format("R(2 e1) = {:.10g}, best other direction {:.10g}", best, runner_up)));
  }

  // Sampler: Pr[0 <= x1 <= 1/2] = 1/4, |x| = 1, y = sgn(x1).
  {
    const int dim = static_cast<int>(cfg.param("dim"));
    const auto n = static_cast<std::size_t>(cfg.param("mc_draws"));
    if (dim < 2) throw ConfigError("dim must be at least 2", "source.dim");
    if (n < 100) throw ConfigError("mc_draws must be at least 100", "source.mc_draws");
    Rng rng(cfg.seed, 0, StreamRole::calibration);
    std::size_t hits = 0;
    double norm_err = 0.0;
    bool labels_ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      const LabeledSample s = sample_sphere_slice(rng, dim);
      if (s.x[0] >= 0.0 && s.x[0] <= 0.5) ++hits;
      norm_err = std::max(norm_err, std::abs(s.x.norm() - 1.0));
      labels_ok = labels_ok && s.y == sgn_label(s.x[0]);
    }
    const double frac = static_cast<double>(hits) / n;
    const double se = std::sqrt(0.25 * 0.75 / n);
    const bool ok = std::abs(frac - 0.25) <= 5.0 * se && norm_err <= 1e-12 && labels_ok;
    res.checks.push_back(numeric_check(
        "sphere sampler", ok,
        fmt::format("Pr[0 <= x1 <= 1/2] = {:.5f} (5 se = {:.2g}), max | |x| - 1 | = {:.2g}", frac,
                    5.0 * se, norm_err),
        {}, "statistical"));

    // SGD on the sphere law; the lemma holds against any reference point.
    const DataSource src = SphereSource{dim};
    const Comparator axis = sphere_axis_comparator(cfg.t, dim);
    CloudSpec spec;
    spec.loss = Loss::logistic();
    spec.source = &src;
    spec.w0 = Vector::Zero(dim);
    spec.w_ref = axis.w_ref;
    spec.eta = resolve_eta(cfg, 1.0);
    spec.t = cfg.t;
    const Cloud cloud = md_cloud(cfg, spec);
    res.files["trajectories.csv"] = trajectory_header(dim, false) + cloud.trajectories;
    res.checks.push_back(sure_check("deterministic MD lemma", cloud.sure));
    res.report["comparator"] = to_json(axis);
    res.report["mean_final_iterate"] = mean_final(cloud);
    res.report["eta"] = spec.eta;
  }

  json order = json::array();
  for (double t : {1e1, 1e2, 1e3, 1e4, 1e5}) {
    const Comparator c = sphere_axis_comparator(t, 2);
    order.push_back({{"t", t}, {"w_ref_norm", c.w_ref.norm()}, {"risk", *c.risk},
                     {"order_ratio", c.diagnostics.at("order_ratio")}});
  }
  res.report["axis_comparator_scaling"] = order;
  res.report["risk_table"] = rows;
  res.files["ledger.csv"] = std::string(kLedgerHeader) + ledger_text(ledger, 0);
}

void exp_margin_prop(const ExperimentConfig& cfg, ExperimentResult& res) {
  const double gamma = cfg.param("gamma");
  const DiscreteDistribution dist = margin_law(gamma);
  const DataSource src = dist;
  const Loss loss = Loss::logistic();
  const FiniteRisk risk = FiniteRisk::of(loss, dist);
  const Vector u{{0.0, 1.0}};
  const double t = cfg.t;

  const auto n_cal = static_cast<std::size_t>(cfg.param("calibration"));
  const auto n_mc = static_cast<std::size_t>(cfg.param("mc_draws"));
  if (n_cal < 1) throw ConfigError("calibration must be positive", "source.calibration");
  if (n_mc < 2) throw ConfigError("mc_draws must be at least 2", "source.mc_draws");
  const auto cal = draw_dataset(src, Rng(cfg.seed, 0, StreamRole::calibration), n_cal);
  const double gamma_hat = estimate_margin(u, cal, t);
  res.checks.push_back(numeric_check(
      "calibrated margin equals the hard margin", std::abs(gamma_hat - gamma) <= 1e-12,
      fmt::format("estimate {:.17g}, true {:.17g}", gamma_hat, gamma)));

  const Comparator cmp = margin_comparator(u, gamma, t);
  const double ceiling = *cmp.risk_ceiling;
  const RiskEstimate mc = estimate_risk(loss, src, cmp.w_ref, RiskMode::monte_carlo(n_mc, cfg.seed));
  res.checks.push_back(numeric_check(
      "Monte Carlo risk of w_ref within the ceiling", mc.value <= ceiling + 4.0 * mc.stderr_,
      fmt::format("R = {:.6g} +- {:.2g}, ceiling {:.6g}", mc.value, mc.stderr_, ceiling),
      {{"risk", mc.value}, {"stderr", mc.stderr_}, {"ceiling", ceiling}}, "statistical"));
  const double exact = risk.value(cmp.w_ref);
  res.checks.push_back(numeric_check("exact risk of w_ref within the ceiling", exact <= ceiling,
                                     fmt::format("R = {:.10g}, ceiling {:.10g}", exact, ceiling)));

  // Soft margin: the two-cluster law at t = 10 has margin measured on the likely points.
  {
    const DiscreteDistribution two = two_cluster_default();
    const double g10 = exact_margin(two, u, 10.0);
    const Comparator c10 = margin_comparator(u, g10, 10.0);
    const double r10 = FiniteRisk::of(loss, two).value(c10.w_ref);
    res.checks.push_back(numeric_check(
        "two-cluster soft margin at t = 10", g10 > 0.0 && r10 <= *c10.risk_ceiling,
        fmt::format("gamma_10 = {:.6g}, R = {:.6g}, ceiling {:.6g}", g10, r10,
                    *c10.risk_ceiling)));
    res.report["two_cluster_t10"] = {{"gamma", g10}, {"risk", r10},
                                     {"ceiling", *c10.risk_ceiling}};
  }

  std::vector<LedgerEntry> ledger;
  int k = 0;
  for (double tt : {10.0, 30.0, 100.0, 300.0, 1000.0}) {
    const Comparator c = margin_comparator(u, gamma, tt);
    ledger.push_back(plain_entry(++k, risk.value(c.w_ref), *c.risk_ceiling));
  }
  res.files["ledger.csv"] = std::string(kLedgerHeader) + ledger_text(ledger, 0);

  CloudSpec spec;
  spec.loss = loss;
  spec.source = &src;
  spec.w0 = Vector::Zero(2);
  spec.w_ref = cmp.w_ref;
  spec.eta = resolve_eta(cfg, 1.0);
  spec.t = cfg.t;
  const Cloud cloud = md_cloud(cfg, spec);
  res.files["trajectories.csv"] = trajectory_header(2, false) + cloud.trajectories;
  res.checks.push_back(sure_check("deterministic MD lemma", cloud.sure));
  res.report["comparator"] = to_json(cmp);
  res.report["estimated_margin"] = gamma_hat;
  res.report["mean_final_iterate"] = mean_final(cloud);
}

void exp_realizable(const ExperimentConfig& cfg, ExperimentResult& res) {
  const MirrorGeometry geom = MirrorGeometry::euclidean();
  const DiscreteDistribution dist = margin_law(cfg.param("gamma"));
  const DataSource src = dist;
  const Loss loss = Loss::logistic();
  const FiniteRisk risk = FiniteRisk::of(loss, dist);
  const double rho = *loss.self_bounding_rho();
  const double t = cfg.t;
  const Vector u{{0.0, 1.0}};
  const Vector w0 = Vector::Zero(2);

  // Smallest scale s (step 0.5) with R(s u) <= rho D0 / t.
  Vector w_ref;
  for (double s = 0.5; s <= 1000.0; s += 0.5) {
    const Vector w = s * u;
    if (risk.value(w) <= rho * bregman_div(geom, w, w0) / t) {
      w_ref = w;
      break;
    }
  }
  if (w_ref.size() == 0) throw DomainError("realizable_thm: no realizable comparator found");
  double c4 = 0.0;
  for (std::size_t k = 0; k < dist.points.size(); ++k) {
    c4 = std::max(c4, loss_eval(loss, dist.labels[k], dist.points[k].dot(w_ref)).value);
  }

  RealizableInputs in;
  in.c1 = loss.qb().c1;
  in.c2 = loss.qb().c2;
  in.rho = rho;
  in.c4 = c4;
  in.d0 = bregman_div(geom, w_ref, w0);
  in.norm_wref = w_ref.norm();
  in.r_wref = risk.value(w_ref);
  in.eta = resolve_eta(cfg, 1.0 / (2.0 * rho));
  in.delta = resolve_delta(cfg, 2.0 * t);
  in.t = t;

  std::optional<BoundReport> bound;
  try {
    bound = realizable_bound(in);
  } catch (const DomainError& e) {
    res.report["bound_error"] = e.what();
  }

  CloudSpec spec;
  spec.loss = loss;
  spec.source = &src;
  spec.w0 = w0;
  spec.w_ref = w_ref;
  spec.eta = in.eta;
  spec.t = cfg.t;
  if (bound) {
    spec.risk = [&risk](const Vector& w) { return risk.value(w); };
    spec.bound = &*bound;
  }
  const Cloud cloud = md_cloud(cfg, spec);
  res.files["trajectories.csv"] = trajectory_header(2, false) + cloud.trajectories;
  res.files["ledger.csv"] = std::string(kLedgerHeader) + cloud.ledger;
  res.checks.push_back(sure_check("deterministic MD lemma", cloud.sure));
  if (bound) {
    res.checks.push_back(stat_check("realizable ledger",
                                    violation_stats(cloud.summaries, bound->failure_budget), true));
    res.report["bound"] = to_json(*bound, t);
  } else {
    res.checks.push_back(numeric_check("realizable ledger", false,
                                       "eta above 1/(2 rho): the theorem does not apply", {},
                                       "statistical"));
    res.checks.back().gating = false;
  }
  res.report["comparator"] = to_json(user_comparator(geom, risk, w_ref, w0));
  res.report["C4"] = c4;
  res.report["mean_final_iterate"] = mean_final(cloud);
}

void exp_general(const ExperimentConfig& cfg, ExperimentResult& res) {
  const MirrorGeometry geom = MirrorGeometry::euclidean();
  const DiscreteDistribution dist = two_cluster(cfg);
  const double stick = cfg.param("stickiness");
  if (!(stick >= 0.0 && stick < 1.0)) {
    throw ConfigError("stickiness must lie in [0, 1)", "source.stickiness");
  }
  const int m = static_cast<int>(dist.points.size());
  FiniteChain chain;
  const Vector p = Eigen::Map<const Vector>(dist.probs.data(), m);
  chain.transition = stick * Matrix::Identity(m, m) + (1.0 - stick) * Vector::Ones(m) * p.transpose();
  chain.features = dist.points;
  chain.labels = Eigen::Map<const Vector>(dist.labels.data(), m);
  chain.reward = Vector::Zero(m);
  const DataSource src = ChainSource{chain};

  const Loss loss = Loss::logistic();
  const FiniteRisk risk = FiniteRisk::of(loss, chain);
  const double t = cfg.t;
  const Vector w0 = Vector::Zero(2);
  const StationarityWitness wit = chain_witness(chain, 1.0 / std::sqrt(t));
  const double lambda = cfg.param("lambda") > 0.0 ? cfg.param("lambda") : 1.0 / std::sqrt(t);
  const Comparator cmp = solve_u_ref(geom, risk, w0, lambda);

  GeneralInputs gi;
  gi.c1 = loss.qb().c1;
  gi.c2 = loss.qb().c2;
  gi.d0 = cmp.bregman_to_w0;
  gi.norm_wref = cmp.w_ref.norm();
  gi.r_wref = risk.value(cmp.w_ref);
  gi.excess_wref = cmp.excess_risk;
  gi.tau = wit.tau;
  gi.delta = resolve_delta(cfg, t * wit.tau);
  gi.t = t;
  gi.eta = resolve_eta(cfg, general_bound(gi).eta_ceiling);
  const BoundReport bound = general_bound(gi);

  struct Out {
    std::string rows, ledger;
    CheckReport sure;
    TrialSummary summary;
  };
  auto runs = parallel_trials(cfg.jobs, cfg.trials, [&](int trial) {
    Out o;
    SampleStream stream(src, Rng(cfg.seed, static_cast<std::uint32_t>(trial), StreamRole::samples));
    const CoupledTrajectory ct =
        run_coupled(geom, loss, stream, w0, cmp.w_ref, bound.b_w, bound.eta, cfg.t);
    MdTrajectory md;
    md.eta = ct.eta;
    md.final_w = ct.final_w;
    for (const auto& r : ct.records) md.steps.push_back(r.step);
    const auto ref = losses_at_reference(loss, md, cmp.w_ref);
    o.sure = check_det_md(geom, md, ref, cmp.w_ref);
    std::vector<Vector> iterates;
    std::vector<double> risks;
    for (std::size_t i = 0; i <= md.length(); ++i) iterates.push_back(md.iterate(i));
    for (std::size_t i = 0; i < md.length(); ++i) risks.push_back(risk.value(iterates[i]));
    const auto ledger = average_risk_ledger(geom, iterates, risks, cmp.w_ref, bound);
    double mean = 0.0;
    for (double r : risks) mean += r;
    mean /= std::max<std::size_t>(1, risks.size());
    o.summary = summarize_trial(trial, ledger, ct.any_decoupling(),
                                bregman_div(geom, cmp.w_ref, ct.final_w), mean);
    append_coupled_rows(o.rows, trial, ct);
    o.ledger = ledger_text(ledger, trial);
    return o;
  });

  std::string rows = trajectory_header(2, true), ledger = kLedgerHeader;
  std::vector<CheckReport> sure;
  std::vector<TrialSummary> summaries;
  long decoupled = 0;
  for (auto& o : runs) {
    rows += o.rows;
    ledger += o.ledger;
    sure.push_back(o.sure);
    summaries.push_back(o.summary);
    decoupled += o.summary.any_decoupling ? 1 : 0;
  }
  res.files["trajectories.csv"] = rows;
  res.files["ledger.csv"] = ledger;
  res.checks.push_back(sure_check("deterministic MD lemma", sure));
  res.checks.push_back(stat_check("coupling event",
                                  count_stats(decoupled, cfg.trials, bound.failure_budget),
                                  applicable(bound), ceiling_note(bound)));
  res.checks.push_back(stat_check("average-risk ledger",
                                  violation_stats(summaries, bound.failure_budget),
                                  applicable(bound), ceiling_note(bound)));
  res.report["witness"] = {{"pi", to_json(wit.pi)}, {"tau", wit.tau}, {"eps", wit.eps}};
  res.report["comparator"] = to_json(cmp);
  res.report["bound"] = to_json(bound, t);
}

void exp_heavy(const ExperimentConfig& cfg, ExperimentResult& res) {
  HeavyTailSpec tail;
  const int kind = static_cast<int>(cfg.param("kind"));
  if (kind != 0 && kind != 1) throw ConfigError("kind must be 0 or 1", "source.kind");
  tail.kind = kind == 0 ? HeavyTailSpec::Kind::subgaussian : HeavyTailSpec::Kind::polynomial;
  tail.p = static_cast<int>(cfg.param("p"));
  tail.m = cfg.param("moment");
  tail.sigma = cfg.param("sigma");
  const int dim = static_cast<int>(cfg.param("dim"));
  if (dim < 1) throw ConfigError("dim must be positive", "source.dim");
  try {
    tail.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what(), "source");
  }
  const DataSource src = HeavySource{tail, dim};
  const MirrorGeometry geom = MirrorGeometry::euclidean();
  const Loss loss = Loss::squared();
  const double t = cfg.t;
  const HeavyMoments mom = heavy_moments(tail);
  const double sqrt_z = heavy_sqrt_z_mean(tail);
  auto risk = [sqrt_z, dim](const Vector& w) {
    return 0.5 * sqrt_z * (1.0 + w.squaredNorm() / dim);
  };
  const Vector w0 = Vector::Zero(dim);
  const Vector w_ref = Vector::Zero(dim);

  HeavyInputs hi;
  hi.c1 = loss.qb().c1;
  hi.c2 = loss.qb().c2;
  hi.d0 = 0.0;
  hi.norm_wref = 0.0;
  hi.r_wref = risk(w_ref);
  hi.excess_wref = 0.0;
  hi.tail = tail;
  hi.ez = mom.mean_z;
  hi.delta = resolve_delta(cfg, 2.0 * t);
  hi.t = t;
  hi.eta = resolve_eta(cfg, heavy_bound(hi).eta_ceiling);
  const BoundReport bound = heavy_bound(hi);

  CloudSpec spec;
  spec.geom = geom;
  spec.loss = loss;
  spec.source = &src;
  spec.w0 = w0;
  spec.w_ref = w_ref;
  spec.eta = bound.eta;
  spec.t = cfg.t;
  spec.risk = risk;
  spec.bound = &bound;
  const Cloud cloud = md_cloud(cfg, spec);
  res.files["trajectories.csv"] = trajectory_header(dim, false) + cloud.trajectories;
  res.files["ledger.csv"] = std::string(kLedgerHeader) + cloud.ledger;
  res.checks.push_back(numeric_check("finite iterates", cloud.all_finite,
                                     fmt::format("{} trials", cfg.trials)));
  res.checks.push_back(sure_check("deterministic MD lemma", cloud.sure));
  res.checks.push_back(stat_check("average-risk ledger",
                                  violation_stats(cloud.summaries, bound.failure_budget),
                                  applicable(bound), ceiling_note(bound)));
  res.report["moments"] = {{"EZ", mom.mean_z},          {"VarZ", mom.var_z},
                           {"E_sqrt_Z", sqrt_z},         {"lomax_shape", mom.lomax_shape},
                           {"lomax_scale", mom.lomax_scale}, {"M", mom.moment_bound}};
  res.report["C"] = heavy_constant(tail, mom.mean_z, hi.delta, t);
  res.report["bound"] = to_json(bound, t);
  res.report["mean_final_iterate"] = mean_final(cloud);
}

void exp_batch(const ExperimentConfig& cfg, ExperimentResult& res) {
  const MirrorGeometry geom = MirrorGeometry::euclidean();
  const DiscreteDistribution dist = two_cluster(cfg);
  const DataSource src = dist;
  const Loss loss = Loss::logistic();
  const FiniteRisk risk = FiniteRisk::of(loss, dist);
  const double t = cfg.t;
  const double n = cfg.param("n");
  if (!(n >= 1.0)) throw ConfigError("n must be at least 1", "source.n");
  const Vector w0 = Vector::Zero(2);
  const Comparator cmp = solve_u_ref(geom, risk, w0, 1.0 / std::sqrt(t));

  BatchInputs bi;
  bi.c1 = loss.qb().c1;
  bi.c2 = loss.qb().c2;
  bi.d0 = cmp.bregman_to_w0;
  bi.norm_wref = cmp.w_ref.norm();
  bi.r_wref = risk.value(cmp.w_ref);
  bi.excess_wref = cmp.excess_risk;
  bi.c6 = geom.rademacher_c6();
  bi.delta = resolve_delta(cfg, 4.0);
  bi.t = t;
  bi.n = n;
  bi.eta = resolve_eta(cfg, batch_bound(bi).discrete.eta_ceiling);
  const BoundReport bound = batch_bound(bi).discrete;

  struct Out {
    std::string rows, ledger;
    CheckReport sure;
    TrialSummary summary;
  };
  auto runs = parallel_trials(cfg.jobs, cfg.trials, [&](int trial) {
    Out o;
    const auto data = draw_dataset(
        src, Rng(cfg.seed, static_cast<std::uint32_t>(trial), StreamRole::dataset),
        static_cast<std::size_t>(n));
    const MdTrajectory md = run_batch_md(geom, loss, data, w0, bound.eta, cfg.t);
    const auto ref = losses_at_reference(loss, md, cmp.w_ref, data);
    o.sure = check_det_md(geom, md, ref, cmp.w_ref);
    std::vector<Vector> iterates;
    std::vector<double> risks;
    for (std::size_t i = 0; i <= md.length(); ++i) iterates.push_back(md.iterate(i));
    for (std::size_t i = 0; i < md.length(); ++i) risks.push_back(risk.value(iterates[i]));
    const auto ledger = average_risk_ledger(geom, iterates, risks, cmp.w_ref, bound);
    double mean = 0.0;
    for (double r : risks) mean += r;
    mean /= std::max<std::size_t>(1, risks.size());
    o.summary =
        summarize_trial(trial, ledger, false, bregman_div(geom, cmp.w_ref, md.final_w), mean);
    append_md_rows(o.rows, trial, md);
    o.ledger = ledger_text(ledger, trial);
    return o;
  });
  std::string rows = trajectory_header(2, false), ledger = kLedgerHeader;
  std::vector<CheckReport> sure;
  std::vector<TrialSummary> summaries;
  for (auto& o : runs) {
    rows += o.rows;
    ledger += o.ledger;
    sure.push_back(o.sure);
    summaries.push_back(o.summary);
  }
  res.files["trajectories.csv"] = rows;
  res.files["ledger.csv"] = ledger;
  res.checks.push_back(sure_check("deterministic MD lemma (batch)", sure));
  res.checks.push_back(stat_check("average-risk ledger",
                                  violation_stats(summaries, bound.failure_budget),
                                  applicable(bound), ceiling_note(bound)));
  res.report["comparator"] = to_json(cmp);
  res.report["bound"] = to_json(bound, t);
}

void exp_median(const ExperimentConfig& cfg, ExperimentResult& res) {
  const double lo = cfg.param("low"), mid = cfg.param("mid"), hi = cfg.param("high");
  const double p_lo = cfg.param("p_low"), p_mid = cfg.param("p_mid");
  const double p_hi = 1.0 - p_lo - p_mid;
  if (!(lo < mid && mid < hi)) throw ConfigError("need low < mid < high", "source.mid");
  if (!(p_lo > 0.0 && p_mid > 0.0 && p_hi > 0.0)) {
    throw ConfigError("masses must be positive and sum below 1", "source.p_mid");
  }
  double median = 0.0;
  if (p_lo > 0.5) {
    median = lo;
  } else if (p_lo < 0.5 && p_lo + p_mid > 0.5) {
    median = mid;
  } else if (p_lo + p_mid < 0.5) {
    median = hi;
  } else {
    throw ConfigError("the median is not unique for these masses", "source.p_low");
  }
  DiscreteDistribution dist;
  dist.points = {Vector::Ones(1), Vector::Ones(1), Vector::Ones(1)};
  dist.labels = {lo, mid, hi};
  dist.probs = {p_lo, p_mid, p_hi};
  dist.bounded = std::max(std::abs(lo), std::abs(hi)) <= 1.0;
  dist.validate();
  const DataSource src = dist;
  const double eta = resolve_eta(cfg, 0.01);

  CloudSpec spec;
  spec.loss = Loss::absolute();
  spec.source = &src;
  spec.w0 = Vector::Zero(1);
  spec.w_ref = Vector::Constant(1, median);
  spec.eta = eta;
  spec.t = cfg.t;
  spec.dump_trials = static_cast<int>(cfg.param("dump_trials"));
  const Cloud cloud = md_cloud(cfg, spec);

  long far = 0;
  std::vector<LedgerEntry> entries;
  double worst = 0.0;
  std::string ledger = kLedgerHeader;
  for (std::size_t i = 0; i < cloud.finals.size(); ++i) {
    const double dist_to_median = std::abs(cloud.finals[i][0] - median);
    worst = std::max(worst, dist_to_median);
    far += dist_to_median > 2.0 * eta ? 1 : 0;
    const LedgerEntry e = plain_entry(cfg.t, dist_to_median, 2.0 * eta);
    ledger += ledger_text(std::span(&e, 1), static_cast<int>(i));
  }
  res.files["trajectories.csv"] = trajectory_header(1, false) + cloud.trajectories;
  res.files["ledger.csv"] = ledger;
  res.checks.push_back(sure_check("deterministic MD lemma", cloud.sure));
  res.checks.push_back(stat_check("|w_t - median| <= 2 eta", count_stats(far, cfg.trials, 0.05),
                                  true, fmt::format("worst distance {:.4g}", worst)));

  // |w_t - median| against eta, scalar sign steps on the same sample streams.
  json sweep = json::array();
  const int sweep_trials = std::min(cfg.trials, 20);
  for (double e : {0.1, 0.03, 0.01, 0.003}) {
    double mean = 0.0, mx = 0.0;
    for (int trial = 0; trial < sweep_trials; ++trial) {
      SampleStream stream(src, Rng(cfg.seed, static_cast<std::uint32_t>(trial),
                                   StreamRole::samples));
      double w = 0.0;
      for (int i = 0; i < cfg.t; ++i) {
        const double y = stream.next().y;
        w += y > w ? e : (y < w ? -e : 0.0);
      }
      mean += std::abs(w - median) / sweep_trials;
      mx = std::max(mx, std::abs(w - median));
    }
    sweep.push_back({{"eta", e}, {"mean_abs_error", mean}, {"max_abs_error", mx}});
  }
  res.report["median"] = median;
  res.report["eta"] = eta;
  res.report["eta_sweep"] = sweep;
}

}  // namespace mdlab::detail
