#pragma once

// Shared plumbing for the experiment runners.

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "mdlab/bounds.hpp"
#include "mdlab/comparators.hpp"
#include "mdlab/experiments.hpp"
#include "mdlab/solvers.hpp"
#include "mdlab/verify.hpp"

namespace mdlab::detail {

using nlohmann::json;

// fn(i) for i in [0, n) on up to `jobs` threads; results land at index i.
// If any call throws, the exception of the lowest failing index is rethrown.
template <class F>
auto parallel_trials(int jobs, int n, F&& fn) -> std::vector<decltype(fn(0))> {
  using T = decltype(fn(0));
  std::vector<std::optional<T>> slots(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  int workers = jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::max(1, std::min(workers, n));
  std::atomic<int> next{0};
  auto work = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int k = 0; k < workers; ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<T> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// --- csv --------------------------------------------------------------------

std::string trajectory_header(int dim, bool coupled);
void append_coords(std::string& out, const Vector& w);
void append_md_rows(std::string& out, int trial, const MdTrajectory& traj);
void append_coupled_rows(std::string& out, int trial, const CoupledTrajectory& traj);
void append_td_rows(std::string& out, int trial, const TdTrajectory& traj);
std::string ledger_text(std::span<const LedgerEntry> ledger, int trial);
inline constexpr const char* kLedgerHeader = "trial,step,lhs,rhs,slack,violated\n";

// --- json -------------------------------------------------------------------

json to_json(const Vector& v);
json to_json(const CheckReport& r);
json to_json(const ViolationStats& s);
json to_json(const BoundReport& r, double t);
json to_json(const Comparator& c);

// --- checks -----------------------------------------------------------------

CheckOutcome sure_check(std::string name, const std::vector<CheckReport>& reports,
                        bool gating = true);
CheckOutcome stat_check(std::string name, const ViolationStats& stats, bool gating,
                        std::string note = {});
CheckOutcome numeric_check(std::string name, bool passed, std::string detail, json data = {},
                           std::string kind = "numeric");

// Step size used by a run: the configured eta (or the ceiling when none is
// configured), times eta_scale.
double resolve_eta(const ExperimentConfig& cfg, double ceiling);
// Configured delta, or target / budget_per_delta.
double resolve_delta(const ExperimentConfig& cfg, double budget_per_delta, double target = 0.05);

json config_json(const ExperimentConfig& cfg);

// --- stochastic MD cloud ----------------------------------------------------

struct CloudSpec {
  MirrorGeometry geom = MirrorGeometry::euclidean();
  Loss loss = Loss::logistic();
  const DataSource* source = nullptr;
  Vector w0;
  Vector w_ref;
  double eta = 0.0;
  int t = 0;
  std::function<double(const Vector&)> risk;  // empty: no ledger
  const BoundReport* bound = nullptr;
  bool keep_points = false;
  int dump_trials = -1;  // trials whose rows go to trajectories.csv; < 0 means all
};

struct Cloud {
  std::string trajectories;  // rows, no header
  std::string ledger;        // rows, no header
  std::vector<CheckReport> sure;
  std::vector<TrialSummary> summaries;
  std::vector<Vector> points;  // every iterate of every trial when keep_points
  std::vector<Vector> finals;
  bool all_finite = true;
};

Cloud md_cloud(const ExperimentConfig& cfg, const CloudSpec& spec);

// Hexbin over the bounding box of `points`, padded by one radius.
std::string hexbin_text(std::span<const Vector> points, double radius, json* meta = nullptr);

DiscreteDistribution two_cluster(const ExperimentConfig& cfg);

// --- runners ----------------------------------------------------------------

void exp_fig1(const ExperimentConfig& cfg, ExperimentResult& res, const Loss& loss, bool hexbin);
void exp_fig2(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_sphere_prop(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_margin_prop(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_realizable(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_general(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_heavy(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_batch(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_median(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_td(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_flow(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_uref(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_svt(const ExperimentConfig& cfg, ExperimentResult& res);
void exp_loss_props(const ExperimentConfig& cfg, ExperimentResult& res);

}  // namespace mdlab::detail
