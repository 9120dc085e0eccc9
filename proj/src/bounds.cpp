#include "mdlab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "mdlab/error.hpp"

namespace mdlab {

namespace {

void require_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw DomainError(fmt::format("delta = {} outside (0, 1)", delta));
  }
}

void require_horizon(double t) {
  if (!(t >= 1.0) || !std::isfinite(t)) throw DomainError("horizon t must be at least 1");
}

void require_nonneg(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw DomainError(fmt::format("{} must be finite and nonnegative, got {}", what, v));
  }
}

double clamp_budget(double b) { return std::min(1.0, std::max(0.0, b)); }

double c_max(double c1, double c2) { return std::max({1.0, c1, c2}); }

// Shared by the general, heavy and batch theorems.
double sqrt_t_bw(double c2, double norm_wref, double d0) {
  return std::max({1.0, c2 > 0.0 ? norm_wref : 0.0, 4.0 * std::sqrt(d0)});
}

void check_comparator_hypothesis(BoundReport& r, std::optional<double> excess, double d0,
                                 double t) {
  if (!excess) return;
  const double allowed = d0 / std::sqrt(t);
  r.inputs_echo["hypothesis_slack"] = allowed - *excess;
  if (*excess > allowed) {
    r.warnings.push_back(fmt::format(
        "comparator hypothesis E(w_ref) <= D0/sqrt(t) violated: E = {:.6g} > {:.6g}", *excess,
        allowed));
  }
}

void attach_average_rhs(BoundReport& r, double r_wref) {
  const double bw2 = r.b_w * r.b_w;
  const double eta = r.eta;
  r.rhs_at = [bw2, eta, r_wref](double i) { return bw2 / (8.0 * i * eta) + r_wref; };
  r.lhs_bregman_weight = 1.0;
}

}  // namespace

BoundReport realizable_bound(const RealizableInputs& in) {
  require_delta(in.delta);
  require_horizon(in.t);
  require_nonneg(in.c1, "C1");
  require_nonneg(in.c2, "C2");
  require_nonneg(in.c4, "C4");
  require_nonneg(in.d0, "D0");
  if (!(in.rho > 0.0)) throw DomainError("realizable_bound: rho must be positive");
  if (!(in.eta > 0.0)) throw DomainError("realizable_bound: eta must be positive");
  BoundReport r;
  r.theorem = "md_realizable";
  r.eta_ceiling = 1.0 / (2.0 * in.rho);
  if (in.eta > r.eta_ceiling) {
    throw DomainError(fmt::format("realizable_bound: eta = {} exceeds 1/(2 rho) = {}", in.eta,
                                  r.eta_ceiling));
  }
  r.eta = in.eta;
  r.b_w = std::max({1.0, 4.0 * std::sqrt(in.d0),
                    std::sqrt(64.0 * in.c4 / in.rho * std::log(1.0 / in.delta))});
  const double b = r.b_w * std::sqrt(1.0 + in.c1 + in.c2 * (1.0 + in.norm_wref) + in.c4);
  r.b = b;
  r.failure_budget = clamp_budget(2.0 * in.t * in.delta);
  r.lhs_bregman_weight = 8.0 / 3.0;
  const double eta = in.eta, r_wref = in.r_wref;
  r.rhs_at = [b, eta, r_wref](double i) { return 2.0 * b * b / (i * eta) + 4.0 / eta * r_wref; };
  r.inputs_echo = {{"C1", in.c1},   {"C2", in.c2},   {"rho", in.rho},
                   {"C4", in.c4},   {"D0", in.d0},   {"norm_wref", in.norm_wref},
                   {"R_wref", in.r_wref}, {"eta", in.eta}, {"delta", in.delta},
                   {"t", in.t}};
  const double allowed = in.rho * in.d0 / in.t;
  r.inputs_echo["hypothesis_slack"] = allowed - in.r_wref;
  if (in.r_wref > allowed) {
    r.warnings.push_back(fmt::format(
        "realizability hypothesis R(w_ref) <= rho D0 / t violated: {:.6g} > {:.6g}", in.r_wref,
        allowed));
  }
  return r;
}

BoundReport general_bound(const GeneralInputs& in) {
  require_delta(in.delta);
  require_horizon(in.t);
  require_nonneg(in.d0, "D0");
  if (!(in.tau >= 1.0)) throw DomainError("general_bound: tau must be at least 1");
  BoundReport r;
  r.theorem = "md_general";
  r.b_w = sqrt_t_bw(in.c2, in.norm_wref, in.d0);
  r.eta_ceiling =
      1.0 / (4096.0 * c_max(in.c1, in.c2) * std::sqrt(in.t * in.tau * std::log(1.0 / in.delta)));
  r.eta = in.eta.value_or(r.eta_ceiling);
  r.failure_budget = clamp_budget(in.t * in.tau * in.delta);
  attach_average_rhs(r, in.r_wref);
  r.inputs_echo = {{"C1", in.c1}, {"C2", in.c2},       {"D0", in.d0},   {"norm_wref", in.norm_wref},
                   {"R_wref", in.r_wref}, {"tau", in.tau}, {"delta", in.delta}, {"t", in.t},
                   {"eta", r.eta}};
  check_comparator_hypothesis(r, in.excess_wref, in.d0, in.t);
  if (r.eta > r.eta_ceiling) r.warnings.push_back("eta above the theorem ceiling");
  return r;
}

BoundReport td_bound(const TdInputs& in) {
  require_delta(in.delta);
  require_horizon(in.t);
  if (!(in.gamma > 0.0 && in.gamma < 1.0)) {
    throw DomainError(fmt::format("td_bound: gamma = {} outside (0, 1)", in.gamma));
  }
  require_nonneg(in.residual_norm, "residual norm");
  if (!(in.tau >= 1.0)) throw DomainError("td_bound: tau must be at least 1");
  BoundReport r;
  r.theorem = "td";
  r.b_w = std::max({1.0, 4.0 * in.norm_wref, 4.0 * in.norm_w0_wref});
  r.eta_ceiling = 1.0 / (1024.0 * std::sqrt(in.t * in.tau * std::log(1.0 / in.delta)));
  r.eta = in.eta.value_or(r.eta_ceiling);
  r.failure_budget = clamp_budget(in.t * in.tau * in.delta);
  r.lhs_prediction_weight = (1.0 - in.gamma) * (1.0 - in.gamma);
  const double bw = r.b_w, eta = r.eta, res = in.residual_norm;
  r.rhs_at = [bw, eta, res](double i) { return bw * bw + i * eta * bw * res / 512.0; };
  r.inputs_echo = {{"norm_wref", in.norm_wref}, {"norm_w0_wref", in.norm_w0_wref},
                   {"residual_norm", in.residual_norm}, {"tau", in.tau}, {"delta", in.delta},
                   {"t", in.t}, {"gamma", in.gamma}, {"eta", r.eta}};
  const double allowed = in.norm_w0_wref * in.norm_w0_wref / std::sqrt(in.t);
  r.inputs_echo["hypothesis_slack"] = allowed - in.residual_norm;
  if (in.residual_norm > allowed) {
    r.warnings.push_back(fmt::format(
        "residual hypothesis |E G(w_ref)| <= |w_ref - w0|^2/sqrt(t) violated: {:.6g} > {:.6g}",
        in.residual_norm, allowed));
  }
  if (r.eta > r.eta_ceiling) r.warnings.push_back("eta above the theorem ceiling");
  return r;
}

double heavy_constant(const HeavyTailSpec& tail, double ez, double delta, double t) {
  tail.validate();
  require_delta(delta);
  require_horizon(t);
  if (tail.kind == HeavyTailSpec::Kind::subgaussian) {
    return ez + 2.0 * tail.sigma * std::sqrt(std::log(1.0 / delta) / t);
  }
  const double m = std::max(tail.p / std::exp(1.0), tail.m);
  return ez + 2.0 * m * std::pow(2.0 / delta, 1.0 / tail.p) / std::sqrt(t);
}

BoundReport heavy_bound(const HeavyInputs& in) {
  require_nonneg(in.d0, "D0");
  BoundReport r;
  r.theorem = "md_heavy";
  const double c = heavy_constant(in.tail, in.ez, in.delta, in.t);
  r.b_w = std::max({1.0, in.c2 * in.norm_wref, 4.0 * std::sqrt(in.d0)});
  r.eta_ceiling = 1.0 / (4096.0 * c_max(in.c1, in.c2) *
                         std::sqrt(in.t * (1.0 + c) * std::log(1.0 / in.delta)));
  r.eta = in.eta.value_or(r.eta_ceiling);
  r.failure_budget = clamp_budget(2.0 * in.t * in.delta);
  attach_average_rhs(r, in.r_wref);
  r.inputs_echo = {{"C1", in.c1}, {"C2", in.c2},      {"D0", in.d0},  {"norm_wref", in.norm_wref},
                   {"R_wref", in.r_wref}, {"EZ", in.ez}, {"C", c},     {"delta", in.delta},
                   {"t", in.t}, {"eta", r.eta}};
  if (in.tail.kind == HeavyTailSpec::Kind::subgaussian) {
    r.inputs_echo["sigma"] = in.tail.sigma;
  } else {
    r.inputs_echo["p"] = in.tail.p;
    r.inputs_echo["M"] = std::max(in.tail.p / std::exp(1.0), in.tail.m);
  }
  check_comparator_hypothesis(r, in.excess_wref, in.d0, in.t);
  if (r.eta > r.eta_ceiling) r.warnings.push_back("eta above the theorem ceiling");
  return r;
}

BatchBounds batch_bound(const BatchInputs& in) {
  require_delta(in.delta);
  require_horizon(in.t);
  require_nonneg(in.d0, "D0");
  require_nonneg(in.c6, "C6");
  if (!(in.n >= 1.0)) throw DomainError("batch_bound: n must be at least 1");
  const double lg = std::log(1.0 / in.delta);
  BatchBounds out;

  BoundReport& d = out.discrete;
  d.theorem = "md_batch";
  d.b_w = sqrt_t_bw(in.c2, in.norm_wref, in.d0);
  d.eta_ceiling = 1.0 / (4096.0 * c_max(in.c1, in.c2) * std::sqrt(in.t * (in.c6 + 6.0 * lg)));
  d.eta = in.eta.value_or(d.eta_ceiling);
  d.failure_budget = clamp_budget(4.0 * in.delta);
  attach_average_rhs(d, in.r_wref);
  d.inputs_echo = {{"C1", in.c1}, {"C2", in.c2}, {"D0", in.d0}, {"norm_wref", in.norm_wref},
                   {"R_wref", in.r_wref}, {"C6", in.c6}, {"delta", in.delta}, {"t", in.t},
                   {"n", in.n}, {"eta", d.eta}};
  check_comparator_hypothesis(d, in.excess_wref, in.d0, in.t);
  if (in.t > in.n) {
    d.warnings.push_back(fmt::format("horizon t = {} exceeds n = {}", in.t, in.n));
  }

  BoundReport& f = out.flow;
  f.theorem = "mf_batch";
  f.b_w = 4.0 * std::max({1.0, in.c2 > 0.0 ? in.norm_wref : 0.0, std::sqrt(in.d0)});
  f.eta_ceiling = std::sqrt(in.n) / (16.0 * c_max(in.c1, in.c2) * (in.c6 + 6.0 * std::sqrt(lg)));
  f.eta = 0.0;
  f.failure_budget = clamp_budget(4.0 * in.delta);
  f.lhs_bregman_weight = 1.0;
  const double bw2 = f.b_w * f.b_w, r_wref = in.r_wref;
  f.rhs_at = [bw2, r_wref](double s) { return bw2 / (2.0 * s) + r_wref; };
  f.inputs_echo = d.inputs_echo;
  f.inputs_echo.erase("eta");
  f.inputs_echo["horizon_ceiling"] = f.eta_ceiling;
  if (in.excess_wref) {
    const double allowed = in.d0 / std::sqrt(in.n);
    f.inputs_echo["hypothesis_slack"] = allowed - *in.excess_wref;
    if (*in.excess_wref > allowed) {
      f.warnings.push_back("comparator hypothesis E(w_ref) <= D0/sqrt(n) violated");
    }
  }
  if (in.t > f.eta_ceiling) {
    f.warnings.push_back(fmt::format("flow horizon {} exceeds the ceiling {:.6g}", in.t,
                                     f.eta_ceiling));
  }
  return out;
}

double freedman_rhs(double c, double b, double sum_cond_abs, double delta) {
  if (!(c >= 4.0)) throw DomainError(fmt::format("freedman_rhs: c = {} below 4", c));
  require_nonneg(b, "B");
  require_nonneg(sum_cond_abs, "sum of conditional absolute values");
  require_delta(delta);
  return sum_cond_abs / c + c * b * std::log(1.0 / delta);
}

double markov_conc_rhs(double b_f, double tau, double eps, double t, double delta,
                       double sum_b_i) {
  require_nonneg(b_f, "B_f");
  if (!(tau >= 1.0)) throw DomainError("markov_conc_rhs: tau must be at least 1");
  require_nonneg(eps, "eps");
  require_horizon(t);
  require_delta(delta);
  require_nonneg(sum_b_i, "sum B_i");
  return 2.0 * b_f * (2.0 * tau - 2.0 + t * eps + std::sqrt(t * tau * std::log(1.0 / delta))) +
         sum_b_i;
}

double poly_tail_rhs(double m, int p, double t, double delta) {
  if (p < 2 || p % 2 != 0) throw DomainError(fmt::format("poly_tail_rhs: p = {} not even", p));
  require_nonneg(m, "M");
  require_horizon(t);
  if (!(delta > 0.0)) throw DomainError("poly_tail_rhs: delta must be positive");
  return 2.0 * m * std::sqrt(t) * std::pow(2.0 / delta, 1.0 / p);
}

}  // namespace mdlab
