#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdlab/bounds.hpp"
#include "mdlab/comparators.hpp"
#include "mdlab/data.hpp"
#include "mdlab/solvers.hpp"

namespace mdlab {

inline constexpr double kSureRelTol = 1e-9;

struct LedgerEntry {
  int step = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - lhs
  bool violated = false;
};

// Result of a per-trajectory checker. Checkers never throw on a violated
// inequality.
struct CheckReport {
  std::string checker;
  bool passed = true;
  int violations = 0;
  std::optional<int> first_violation_step;
  std::string first_violation;  // human-readable description
  double worst_slack = INFINITY;  // min over checks of (rhs - lhs) / (1 + |rhs|)

  void record(int step, double lhs, double rhs, double rel_tol, const char* what);
  void fail(int step, std::string what);
};

// f_{i+1}(w_ref) for each step: l(y, <x, w_ref>) on the step's sample, or the
// empirical risk over `dataset` for batch trajectories.
std::vector<double> losses_at_reference(const Loss& loss, const MdTrajectory& traj,
                                        const Vector& w_ref,
                                        std::span<const LabeledSample> dataset = {});

// Deterministic MD lemma at every prefix plus the per-step displacement
// bound |w_{i+1} - w_i| <= eta |g_{i+1}|_*, both at relative tolerance 1e-9.
// Also flags records whose grad_dual_norm disagrees with dual_norm(grad).
CheckReport check_det_md(const MirrorGeometry& geom, const MdTrajectory& traj,
                         std::span<const double> losses_at_wref, const Vector& w_ref);

// Deterministic TD lemma at every prefix (valid for eta <= 1/2 and bounded
// triples), plus |w_{i+1} - w_i| <= eta |G_{i+1}(w_i)|. `projected` selects
// the v sequence of a ball-constrained run.
CheckReport check_det_td(const TdTrajectory& traj, const Vector& w_ref, double gamma, double eta,
                         bool projected = false);
CheckReport check_det_td(const TdTrajectory& traj, const Vector& w_ref, bool projected = false);

struct MfReport {
  CheckReport check;
  double max_residual = 0.0;    // max_k |lhs_k - rhs_k| of the identity
  double final_residual = 0.0;  // at the last record
  double tolerance = 0.0;       // C h^4 t
  double h = 0.0;
};

// Mirror-flow identity D(w_ref, w_s) = D(w_ref, w_0) + int_0^s <w_ref - w_r, g_r> dr
// at every record (composite Simpson, 3/8 rule on a trailing odd panel), the
// convex-case inequality, the primal/dual consistency |w - grad psi*(q)| <=
// 1e-10, and uniformity of the time grid.
MfReport check_mf_identity(const MirrorGeometry& geom, const FlowTrajectory& flow,
                           const Vector& w_ref, const Loss& loss,
                           std::span<const LabeledSample> dataset, double order_constant = 1e4);

// --- risk -------------------------------------------------------------------

struct RiskEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

struct RiskMode {
  enum class Kind { exact, monte_carlo };
  Kind kind = Kind::exact;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  static RiskMode exact() { return {}; }
  static RiskMode monte_carlo(std::size_t n, std::uint64_t seed) {
    return {Kind::monte_carlo, n, seed};
  }
};

// Exact for finite supports (discrete laws, labeled chains under pi), the
// sphere law with logistic loss (d = 2, or w along e1), and heavy sources with
// squared loss. Other exact requests throw UnsupportedError.
RiskEstimate estimate_risk(const Loss& loss, const DataSource& source, const Vector& w,
                           const RiskMode& mode);

// E sqrt(Z) for the heavy laws, by quadrature.
double heavy_sqrt_z_mean(const HeavyTailSpec& spec);

// --- statistics -------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};
// Wilson score interval at z = 1.959963984540054 (95%).
Interval wilson_interval(long successes, long n, double z = 1.959963984540054);

struct TrialSummary {
  int trial = 0;
  bool any_violation = false;
  std::optional<int> first_violation_step;
  bool any_decoupling = false;
  double final_bregman = 0.0;
  double mean_risk = 0.0;
};

TrialSummary summarize_trial(int trial, std::span<const LedgerEntry> ledger, bool any_decoupling,
                             double final_bregman, double mean_risk);

struct ViolationStats {
  long trials = 0;
  long violations = 0;
  double fraction = 0.0;
  Interval wilson;
  double budget = 0.0;
  bool passed = false;  // wilson.lo <= budget
};

ViolationStats violation_stats(std::span<const TrialSummary> trials, double budget);
ViolationStats count_stats(long violations, long trials, double budget);

// --- theorem ledgers --------------------------------------------------------

// i = 1..t: lhs = (c/(i eta)) D(w_ref, w_i) + (1/i) sum_{j<i} R(w_j),
// rhs = report.rhs_at(i), with c = report.lhs_bregman_weight.
std::vector<LedgerEntry> average_risk_ledger(const MirrorGeometry& geom,
                                             std::span<const Vector> iterates,
                                             std::span<const double> risks, const Vector& w_ref,
                                             const BoundReport& report);

// i = 1..t: lhs = |w_i - w_ref|^2 + eta (1 - gamma)^2 sum_{j<i} E_pi <x, w_j - w_ref>^2.
std::vector<LedgerEntry> td_ledger(std::span<const Vector> iterates, const FiniteChain& chain,
                                   const Vector& w_ref, const BoundReport& report);

// Continuous analogue on flow records: s = time,
// lhs = D(w_ref, w_s)/s + (1/s) int_0^s R(w_r) dr with R supplied per record.
std::vector<LedgerEntry> flow_ledger(const MirrorGeometry& geom, const FlowTrajectory& flow,
                                     std::span<const double> risks, const Vector& w_ref,
                                     const BoundReport& report);

void write_ledger_csv(std::ostream& os, std::span<const LedgerEntry> ledger, int trial,
                      bool header);

// --- hexbin -----------------------------------------------------------------

struct Rect {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
};

struct HexCell {
  double cx = 0.0;
  double cy = 0.0;
  long count = 0;
};

// Flat-top hexagons of circumradius `radius` centered on the lattice
// (1.5 R i, sqrt(3) R (j + i/2)). Points outside `bounds` are dropped; ties go
// to the lexicographically smaller (cx, cy). Output sorted by (cx, cy), only
// nonempty cells.
std::vector<HexCell> hexbin_aggregate(std::span<const Vector> points, double radius,
                                      const Rect& bounds);
void write_hexbin_csv(std::ostream& os, std::span<const HexCell> cells);

// Cumulative composite Simpson of uniformly spaced samples: out[k] = int over
// [0, k h] (3/8 rule on the last three panels when k is odd, trapezoid for k = 1).
std::vector<double> cumulative_simpson(std::span<const double> f, double h);

}  // namespace mdlab
