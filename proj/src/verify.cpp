#include "mdlab/verify.hpp"

#include <algorithm>
#include <array>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>

#include "mdlab/error.hpp"

namespace mdlab {

void CheckReport::record(int step, double lhs, double rhs, double rel_tol, const char* what) {
  const double scale = 1.0 + std::abs(rhs);
  const double slack = (rhs - lhs) / scale;
  worst_slack = std::min(worst_slack, slack);
  if (slack < -rel_tol) {
    if (violations == 0) {
      first_violation_step = step;
      first_violation = fmt::format("{} at step {}: lhs = {:.17g} > rhs = {:.17g}", what, step, lhs, rhs);
    }
    ++violations;
    passed = false;
  }
}

void CheckReport::fail(int step, std::string what) {
  if (violations == 0) {
    first_violation_step = step;
    first_violation = fmt::format("{} at step {}", what, step);
  }
  ++violations;
  passed = false;
}

std::vector<double> losses_at_reference(const Loss& loss, const MdTrajectory& traj,
                                        const Vector& w_ref,
                                        std::span<const LabeledSample> dataset) {
  std::vector<double> out;
  out.reserve(traj.steps.size());
  if (traj.batch) {
    if (dataset.empty()) throw DomainError("losses_at_reference: batch trajectory needs its dataset");
    const double r = empirical_loss_grad(loss, dataset, w_ref).value;
    out.assign(traj.steps.size(), r);
    return out;
  }
  for (const auto& rec : traj.steps) {
    if (!rec.sample) throw DomainError("losses_at_reference: step without a recorded sample");
    out.push_back(loss_eval(loss, rec.sample->y, rec.sample->x.dot(w_ref)).value);
  }
  return out;
}

CheckReport check_det_md(const MirrorGeometry& geom, const MdTrajectory& traj,
                         std::span<const double> losses_at_wref, const Vector& w_ref) {
  CheckReport rep;
  rep.checker = "det_md";
  const std::size_t t = traj.steps.size();
  if (losses_at_wref.size() != t) {
    throw DomainError("check_det_md: one reference loss per step required");
  }
  const double eta = traj.eta;
  if (t == 0) {
    return rep;
  }
  const double d0 = bregman_div(geom, w_ref, traj.iterate(0));
  double acc = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    const StepRecord& rec = traj.steps[i];
    const int step = static_cast<int>(i) + 1;
    if (rec.step_size != eta) {
      rep.fail(static_cast<int>(i), fmt::format("recorded step size {} differs from eta = {}",
                                                rec.step_size, eta));
    }
    const double gnorm = geom.dual_norm(rec.grad);
    if (std::abs(gnorm - rec.grad_dual_norm) > 1e-12 * (1.0 + gnorm)) {
      rep.fail(static_cast<int>(i), "grad_dual_norm disagrees with dual_norm(grad)");
    }
    const Vector& w_next = traj.iterate(i + 1);
    rep.record(step, geom.primal_norm(w_next - rec.w), eta * gnorm, kSureRelTol,
               "displacement |w_{i+1} - w_i| <= eta |g|_*");
    acc += eta * (losses_at_wref[i] - rec.inst_loss) + 0.5 * eta * eta * gnorm * gnorm;
    rep.record(step, bregman_div(geom, w_ref, w_next), d0 + acc, kSureRelTol,
               "mirror descent prefix inequality");
  }
  return rep;
}

CheckReport check_det_td(const TdTrajectory& traj, const Vector& w_ref, double gamma, double eta,
                         bool projected) {
  CheckReport rep;
  rep.checker = "det_td";
  if (eta > 0.5) rep.fail(0, fmt::format("lemma needs eta <= 1/2, got {}", eta));
  const std::size_t t = traj.records.size();
  auto iterate = [&](std::size_t i) -> const Vector& {
    return projected ? traj.projected_iterate(i) : traj.iterate(i);
  };
  if (projected && traj.ball &&
      outside_ball(traj.ball->center, traj.ball->radius * (1.0 + 1e-12), iterate(0))) {
    rep.fail(0, "projected TD lemma needs w0 inside the constraint set");
  }
  const double base = (iterate(0) - w_ref).squaredNorm();
  double acc = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    const TdTriple& z = traj.records[i].triple;
    const int step = static_cast<int>(i) + 1;
    if (z.x.norm() > 1.0 + 1e-12 || z.x_next.norm() > 1.0 + 1e-12 || std::abs(z.r) > 1.0 + 1e-12) {
      rep.fail(static_cast<int>(i), "triple violates max{|x|, |x'|, |r|} <= 1");
    }
    const Vector& w = iterate(i);
    const Vector& w_next = iterate(i + 1);
    const Vector d = w - w_ref;
    const Vector g_ref = td_direction(w_ref, z, gamma);
    const double xd = z.x.dot(d);
    const double xnd = gamma * z.x_next.dot(d);
    acc += eta * (-xd * xd + xnd * xnd - 2.0 * g_ref.dot(d) + 4.0 * eta * g_ref.squaredNorm());
    rep.record(step, (w_next - w).norm(), eta * td_direction(w, z, gamma).norm(), kSureRelTol,
               "displacement |w_{i+1} - w_i| <= eta |G(w_i)|");
    rep.record(step, (w_next - w_ref).squaredNorm(), base + acc, kSureRelTol,
               "TD prefix inequality");
  }
  return rep;
}

CheckReport check_det_td(const TdTrajectory& traj, const Vector& w_ref, bool projected) {
  return check_det_td(traj, w_ref, traj.gamma, traj.eta, projected);
}

std::vector<double> cumulative_simpson(std::span<const double> f, double h) {
  const std::size_t n = f.size();
  std::vector<double> out(n, 0.0);
  if (n < 2) return out;
  // Even prefixes: plain composite Simpson.
  std::vector<double> even(n, 0.0);
  for (std::size_t k = 2; k < n; k += 2) {
    even[k] = even[k - 2] + h / 3.0 * (f[k - 2] + 4.0 * f[k - 1] + f[k]);
  }
  for (std::size_t k = 1; k < n; ++k) {
    if (k % 2 == 0) {
      out[k] = even[k];
    } else if (k >= 3) {
      out[k] = even[k - 3] + 3.0 * h / 8.0 * (f[k - 3] + 3.0 * f[k - 2] + 3.0 * f[k - 1] + f[k]);
    } else if (n >= 3) {
      // First panel from the quadratic through f0, f1, f2.
      out[1] = h / 12.0 * (5.0 * f[0] + 8.0 * f[1] - f[2]);
    } else {
      out[1] = 0.5 * h * (f[0] + f[1]);
    }
  }
  return out;
}

MfReport check_mf_identity(const MirrorGeometry& geom, const FlowTrajectory& flow,
                           const Vector& w_ref, const Loss& loss,
                           std::span<const LabeledSample> dataset, double order_constant) {
  MfReport out;
  CheckReport& rep = out.check;
  rep.checker = "mf_identity";
  const auto& recs = flow.records;
  const double h = flow.h;
  out.h = h;
  if (recs.size() < 2) return out;
  const double t_final = recs.back().time;
  out.tolerance = order_constant * std::pow(h, 4) * t_final;

  std::vector<double> integrand(recs.size()), risk(recs.size());
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const FlowRecord& r = recs[k];
    const int step = static_cast<int>(k);
    if (std::abs(r.time - static_cast<double>(k) * h) > 1e-12 * (1.0 + r.time)) {
      rep.fail(step, fmt::format("time grid broken: t = {} but k h = {}", r.time,
                                 static_cast<double>(k) * h));
    }
    if ((r.w - geom.grad_psi_star(r.q)).norm() > 1e-10) {
      rep.fail(step, "primal iterate disagrees with grad psi*(q)");
    }
    const LossGrad lg = empirical_loss_grad(loss, dataset, r.w);
    integrand[k] = (w_ref - r.w).dot(lg.grad);
    risk[k] = lg.value;
  }
  const std::vector<double> ident = cumulative_simpson(integrand, h);
  const std::vector<double> area = cumulative_simpson(risk, h);
  const double d0 = bregman_div(geom, w_ref, recs.front().w);
  const double r_ref = empirical_loss_grad(loss, dataset, w_ref).value;
  for (std::size_t k = 1; k < recs.size(); ++k) {
    const int step = static_cast<int>(k);
    const double lhs = bregman_div(geom, w_ref, recs[k].w);
    const double rhs = d0 + ident[k];
    const double residual = std::abs(lhs - rhs);
    out.max_residual = std::max(out.max_residual, residual);
    const double tol = out.tolerance + 1e-12 * (1.0 + std::abs(rhs));
    if (residual > tol) {
      rep.fail(step, fmt::format("flow identity residual {:.3e} above {:.3e}", residual, tol));
    }
    const double conv_rhs = d0 + recs[k].time * r_ref;
    const double conv_lhs = lhs + area[k];
    if (conv_lhs > conv_rhs + tol) {
      rep.fail(step, fmt::format("convex flow inequality: {:.17g} > {:.17g}", conv_lhs, conv_rhs));
    }
    rep.worst_slack = std::min(rep.worst_slack, (tol - residual) / (1.0 + std::abs(rhs)));
  }
  out.final_residual = std::abs(bregman_div(geom, w_ref, recs.back().w) - d0 - ident.back());
  return out;
}

// --- risk -------------------------------------------------------------------

namespace {

// int_0^1 ln(1 + e^{-r s}) ds for any real r.
double axis_sphere_risk(double r) {
  if (r == 0.0) return std::numbers::ln2;
  if (r > 0.0) return sphere_risk_exact(r);
  return -0.5 * r + sphere_risk_exact(-r);
}

double sphere_logistic_risk_2d(const Vector& w) {
  using boost::math::quadrature::gauss_kronrod;
  const double a = w[0], b = w[1];
  auto f = [a, b](double x1) {
    const double y = x1 >= 0.0 ? 1.0 : -1.0;
    const double rest = std::sqrt(std::max(0.0, 1.0 - x1 * x1));
    const Loss lg = Loss::logistic();
    return 0.25 * (lg.tilde(y * (a * x1 + b * rest)) + lg.tilde(y * (a * x1 - b * rest)));
  };
  double err = 0.0;
  return gauss_kronrod<double, 61>::integrate(f, -1.0, 0.0, 20, 1e-14, &err) +
         gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 20, 1e-14, &err);
}

}  // namespace

double heavy_sqrt_z_mean(const HeavyTailSpec& spec) {
  using boost::math::quadrature::gauss_kronrod;
  const HeavyMoments m = heavy_moments(spec);
  double err = 0.0;
  if (spec.kind == HeavyTailSpec::Kind::subgaussian) {
    if (spec.sigma == 0.0) return 1.0;
    const double sigma = spec.sigma;
    auto f = [sigma](double g) {
      return std::sqrt(1.0 + sigma * g) * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * g * g);
    };
    return gauss_kronrod<double, 61>::integrate(f, 0.0, std::numeric_limits<double>::infinity(),
                                                20, 1e-14, &err);
  }
  const double a = m.lomax_shape, s = m.lomax_scale;
  auto f = [a, s](double w) { return std::sqrt(1.0 + s * w) * a * std::pow(1.0 + w, -a - 1.0); };
  return gauss_kronrod<double, 61>::integrate(f, 0.0, std::numeric_limits<double>::infinity(), 20,
                                              1e-14, &err);
}

RiskEstimate estimate_risk(const Loss& loss, const DataSource& source, const Vector& w,
                           const RiskMode& mode) {
  if (source_dim(source) != w.size()) throw DomainError("estimate_risk: dimension mismatch");
  if (mode.kind == RiskMode::Kind::monte_carlo) {
    if (mode.n < 2) throw DomainError("estimate_risk: Monte Carlo needs at least 2 draws");
    SampleStream stream(source, Rng(mode.seed, 0, StreamRole::test));
    double mean = 0.0, m2 = 0.0;
    for (std::size_t k = 1; k <= mode.n; ++k) {
      const LabeledSample s = stream.next();
      const double v = loss_eval(loss, s.y, s.x.dot(w)).value;
      const double delta = v - mean;
      mean += delta / static_cast<double>(k);
      m2 += delta * (v - mean);
    }
    const double n = static_cast<double>(mode.n);
    return {mean, std::sqrt(m2 / (n - 1.0) / n)};
  }
  if (const auto* disc = std::get_if<DiscreteDistribution>(&source)) {
    return {FiniteRisk::of(loss, *disc).value(w), 0.0};
  }
  if (const auto* ch = std::get_if<ChainSource>(&source)) {
    return {FiniteRisk::of(loss, ch->chain).value(w), 0.0};
  }
  if (std::holds_alternative<SphereSource>(source)) {
    if (loss.kind() != Loss::Kind::logistic) {
      throw UnsupportedError("estimate_risk: exact sphere risk is implemented for logistic loss");
    }
    if (w.size() > 1 && w.tail(w.size() - 1).isZero(0.0)) return {axis_sphere_risk(w[0]), 0.0};
    if (w.size() == 2) return {sphere_logistic_risk_2d(w), 0.0};
    throw UnsupportedError("estimate_risk: exact sphere risk needs d = 2 or w along e1");
  }
  const auto& heavy = std::get<HeavySource>(source);
  if (loss.kind() != Loss::Kind::squared) {
    throw UnsupportedError("estimate_risk: exact heavy-tail risk is implemented for squared loss");
  }
  // x = Z^{1/4} u, y = +-Z^{1/4}: R(w) = E sqrt(Z) (1 + |w|^2/d) / 2.
  const double d = static_cast<double>(heavy.d);
  return {0.5 * heavy_sqrt_z_mean(heavy.spec) * (1.0 + w.squaredNorm() / d), 0.0};
}

// --- statistics -------------------------------------------------------------

Interval wilson_interval(long successes, long n, double z) {
  if (n <= 0 || successes < 0 || successes > n) {
    throw DomainError("wilson_interval: need 0 <= successes <= n and n >= 1");
  }
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  // The endpoints are exactly 0 and 1 at the extremes; the formula only gets there up to rounding.
  return {successes == 0 ? 0.0 : std::max(0.0, center - half),
          successes == n ? 1.0 : std::min(1.0, center + half)};
}

TrialSummary summarize_trial(int trial, std::span<const LedgerEntry> ledger, bool any_decoupling,
                             double final_bregman, double mean_risk) {
  TrialSummary s;
  s.trial = trial;
  for (const auto& e : ledger) {
    if (e.violated) {
      s.any_violation = true;
      s.first_violation_step = e.step;
      break;
    }
  }
  s.any_decoupling = any_decoupling;
  s.final_bregman = final_bregman;
  s.mean_risk = mean_risk;
  return s;
}

ViolationStats count_stats(long violations, long trials, double budget) {
  if (trials < 1) throw DomainError("violation_stats: need at least one trial");
  ViolationStats v;
  v.trials = trials;
  v.violations = violations;
  v.fraction = static_cast<double>(violations) / static_cast<double>(trials);
  v.wilson = wilson_interval(violations, trials);
  v.budget = budget;
  v.passed = v.wilson.lo <= budget;
  return v;
}

ViolationStats violation_stats(std::span<const TrialSummary> trials, double budget) {
  long bad = 0;
  for (const auto& t : trials) bad += t.any_violation ? 1 : 0;
  return count_stats(bad, static_cast<long>(trials.size()), budget);
}

// --- ledgers ----------------------------------------------------------------

namespace {

LedgerEntry make_entry(int step, double lhs, double rhs) {
  LedgerEntry e;
  e.step = step;
  e.lhs = lhs;
  e.rhs = rhs;
  e.slack = rhs - lhs;
  e.violated = e.slack < -kSureRelTol * (1.0 + std::abs(rhs));
  return e;
}

}  // namespace

std::vector<LedgerEntry> average_risk_ledger(const MirrorGeometry& geom,
                                             std::span<const Vector> iterates,
                                             std::span<const double> risks, const Vector& w_ref,
                                             const BoundReport& report) {
  if (iterates.empty() || risks.size() + 1 < iterates.size()) {
    throw DomainError("average_risk_ledger: need risks for w_0..w_{t-1}");
  }
  std::vector<LedgerEntry> out;
  out.reserve(iterates.size() - 1);
  double sum = 0.0;
  for (std::size_t i = 1; i < iterates.size(); ++i) {
    sum += risks[i - 1];
    const double di = static_cast<double>(i);
    const double lhs = report.lhs_bregman_weight / (di * report.eta) *
                           bregman_div(geom, w_ref, iterates[i]) +
                       sum / di;
    out.push_back(make_entry(static_cast<int>(i), lhs, report.rhs_at(di)));
  }
  return out;
}

std::vector<LedgerEntry> td_ledger(std::span<const Vector> iterates, const FiniteChain& chain,
                                   const Vector& w_ref, const BoundReport& report) {
  const Vector pi = stationary_distribution(chain.transition);
  std::vector<LedgerEntry> out;
  if (iterates.empty()) return out;
  out.reserve(iterates.size() - 1);
  double sum = 0.0;
  for (std::size_t i = 1; i < iterates.size(); ++i) {
    const Vector d = iterates[i - 1] - w_ref;
    double pred = 0.0;
    for (int s = 0; s < chain.states(); ++s) {
      const double v = chain.features[s].dot(d);
      pred += pi[s] * v * v;
    }
    sum += pred;
    const double lhs = (iterates[i] - w_ref).squaredNorm() +
                       report.eta * report.lhs_prediction_weight * sum;
    out.push_back(make_entry(static_cast<int>(i), lhs, report.rhs_at(static_cast<double>(i))));
  }
  return out;
}

std::vector<LedgerEntry> flow_ledger(const MirrorGeometry& geom, const FlowTrajectory& flow,
                                     std::span<const double> risks, const Vector& w_ref,
                                     const BoundReport& report) {
  if (risks.size() != flow.records.size()) {
    throw DomainError("flow_ledger: one risk value per flow record required");
  }
  const std::vector<double> area = cumulative_simpson(risks, flow.h);
  std::vector<LedgerEntry> out;
  for (std::size_t k = 1; k < flow.records.size(); ++k) {
    const double s = flow.records[k].time;
    const double lhs = (bregman_div(geom, w_ref, flow.records[k].w) + area[k]) / s;
    out.push_back(make_entry(static_cast<int>(k), lhs, report.rhs_at(s)));
  }
  return out;
}

void write_ledger_csv(std::ostream& os, std::span<const LedgerEntry> ledger, int trial,
                      bool header) {
  if (header) os << "trial,step,lhs,rhs,slack,violated\n";
  for (const auto& e : ledger) {
    os << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{}\n", trial, e.step, e.lhs, e.rhs, e.slack,
                      e.violated ? 1 : 0);
  }
}

// --- hexbin -----------------------------------------------------------------

std::vector<HexCell> hexbin_aggregate(std::span<const Vector> points, double radius,
                                      const Rect& bounds) {
  if (!(radius > 0.0)) throw DomainError("hexbin_aggregate: radius must be positive");
  const double s3 = std::sqrt(3.0);
  std::map<std::pair<long, long>, long> counts;
  auto center = [&](long q, long r) {
    return std::array<double, 2>{1.5 * radius * static_cast<double>(q),
                                 s3 * radius * (static_cast<double>(r) + 0.5 * static_cast<double>(q))};
  };
  for (const auto& p : points) {
    if (p.size() != 2) throw DomainError("hexbin_aggregate: points must be 2-D");
    const double x = p[0], y = p[1];
    if (!(x >= bounds.x_min && x <= bounds.x_max && y >= bounds.y_min && y <= bounds.y_max)) {
      continue;
    }
    const double qf = (2.0 / 3.0) * x / radius;
    const double rf = (-x / 3.0 + s3 / 3.0 * y) / radius;
    const long q0 = std::lround(qf), r0 = std::lround(rf);
    static constexpr std::array<std::array<long, 2>, 7> offsets{
        {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, -1}, {-1, 1}}};
    long best_q = 0, best_r = 0;
    double best_d = INFINITY;
    std::array<double, 2> best_c{};
    const double tie = 1e-12 * radius * radius;
    // Widen the search by one ring so cube rounding errors cannot miss the
    // nearest center.
    for (long dq = -1; dq <= 1; ++dq) {
      for (long dr = -1; dr <= 1; ++dr) {
        for (const auto& o : offsets) {
          const long q = q0 + dq + o[0], r = r0 + dr + o[1];
          const auto c = center(q, r);
          const double d2 = (x - c[0]) * (x - c[0]) + (y - c[1]) * (y - c[1]);
          const bool closer = d2 < best_d - tie;
          const bool tied = std::abs(d2 - best_d) <= tie && (c < best_c);
          if (closer || tied) {
            best_d = std::min(best_d, d2);
            best_q = q;
            best_r = r;
            best_c = c;
          }
        }
      }
    }
    ++counts[{best_q, best_r}];
  }
  std::vector<HexCell> out;
  out.reserve(counts.size());
  for (const auto& [key, n] : counts) {
    const auto c = center(key.first, key.second);
    out.push_back({c[0], c[1], n});
  }
  std::sort(out.begin(), out.end(), [](const HexCell& a, const HexCell& b) {
    return a.cx != b.cx ? a.cx < b.cx : a.cy < b.cy;
  });
  return out;
}

void write_hexbin_csv(std::ostream& os, std::span<const HexCell> cells) {
  os << "center_x,center_y,count\n";
  for (const auto& c : cells) os << fmt::format("{:.17g},{:.17g},{}\n", c.cx, c.cy, c.count);
}

}  // namespace mdlab
