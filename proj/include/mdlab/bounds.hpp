#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdlab/data.hpp"

namespace mdlab {

struct BoundReport {
  std::string theorem;
  double eta_ceiling = 0.0;  // step-size ceiling (flow reports: time-horizon ceiling)
  double eta = 0.0;          // step size the rhs is evaluated at
  double b_w = 0.0;
  std::optional<double> b;   // realizable bound only
  double failure_budget = 0.0;
  double lhs_bregman_weight = 0.0;  // coefficient c in c/(i eta) D(w_ref, w_i); 0 for TD
  double lhs_prediction_weight = 0.0;  // TD only: (1 - gamma)^2
  std::function<double(double)> rhs_at;
  std::map<std::string, double> inputs_echo;
  std::vector<std::string> warnings;
};

struct RealizableInputs {
  double c1 = 0.0, c2 = 0.0, rho = 0.0, c4 = 0.0;
  double d0 = 0.0;  // D_psi(w_ref, w0)
  double norm_wref = 0.0;
  double r_wref = 0.0;
  double eta = 0.0;
  double delta = 0.0;
  double t = 1.0;
};
// Throws DomainError when eta exceeds 1/(2 rho).
BoundReport realizable_bound(const RealizableInputs& in);

struct GeneralInputs {
  double c1 = 0.0, c2 = 0.0;
  double d0 = 0.0;
  double norm_wref = 0.0;
  double r_wref = 0.0;
  std::optional<double> excess_wref;  // for the hypothesis E(w_ref) <= D0/sqrt(t)
  double tau = 1.0;
  double delta = 0.0;
  double t = 1.0;
  std::optional<double> eta;  // default: the ceiling
};
BoundReport general_bound(const GeneralInputs& in);

struct TdInputs {
  double norm_wref = 0.0;
  double norm_w0_wref = 0.0;
  double residual_norm = 0.0;  // |E_pi G(w_ref)|
  double tau = 1.0;
  double delta = 0.0;
  double t = 1.0;
  double gamma = 0.5;
  std::optional<double> eta;
};
// rhs_at(i) = B_w^2 + i eta B_w residual / 512.
BoundReport td_bound(const TdInputs& in);

struct HeavyInputs {
  double c1 = 0.0, c2 = 0.0;
  double d0 = 0.0;
  double norm_wref = 0.0;
  double r_wref = 0.0;
  std::optional<double> excess_wref;
  HeavyTailSpec tail;
  double ez = 1.0;  // E Z_1
  double delta = 0.0;
  double t = 1.0;
  std::optional<double> eta;
};
// The constant C of the chosen tail regime.
double heavy_constant(const HeavyTailSpec& tail, double ez, double delta, double t);
BoundReport heavy_bound(const HeavyInputs& in);

struct BatchInputs {
  double c1 = 0.0, c2 = 0.0;
  double d0 = 0.0;
  double norm_wref = 0.0;
  double r_wref = 0.0;
  std::optional<double> excess_wref;
  double c6 = 1.0;
  double delta = 0.0;
  double t = 1.0;
  double n = 1.0;
  std::optional<double> eta;
};
struct BatchBounds {
  BoundReport discrete;
  // Flow: eta_ceiling holds the time-horizon ceiling and rhs_at(s) is
  // B_w^2/(2s) + R(w_ref).
  BoundReport flow;
};
BatchBounds batch_bound(const BatchInputs& in);

// (1/c) sum + c B ln(1/delta), c >= 4.
double freedman_rhs(double c, double b, double sum_cond_abs, double delta);
// 2 B_f (2 tau - 2 + t eps + sqrt(t tau ln(1/delta))) + sum_B_i.
double markov_conc_rhs(double b_f, double tau, double eps, double t, double delta, double sum_b_i);
// 2 M sqrt(t) (2/delta)^{1/p}, p even.
double poly_tail_rhs(double m, int p, double t, double delta);

}  // namespace mdlab
