#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdlab/data.hpp"
#include "mdlab/geometry.hpp"
#include "mdlab/losses.hpp"

namespace mdlab {

struct Ball {
  Vector center;
  double radius = 0.0;
};

// One mirror-descent step: iterate w_i, the (sub)gradient g_{i+1} taken at
// w_i, and the loss f_{i+1}(w_i). `sample` is empty for batch steps.
struct StepRecord {
  int index = 0;
  Vector w;
  Vector grad;
  double inst_loss = 0.0;
  double grad_dual_norm = 0.0;
  double step_size = 0.0;
  std::optional<LabeledSample> sample;
};

struct MdTrajectory {
  std::vector<StepRecord> steps;  // steps[i].w == w_i, i < t
  Vector final_w;                 // w_t
  double eta = 0.0;
  bool batch = false;
  std::vector<std::string> warnings;

  // w_i for 0 <= i <= t.
  const Vector& iterate(std::size_t i) const { return i < steps.size() ? steps[i].w : final_w; }
  std::size_t length() const { return steps.size(); }
};

// Loss value and gradient of l(y, <x, w>) in w.
struct LossGrad {
  double value = 0.0;
  Vector grad;
};
LossGrad sample_loss_grad(const Loss& loss, const LabeledSample& s, const Vector& w);

// Empirical risk (1/n) sum_k l(y_k, <x_k, w>) and its gradient.
LossGrad empirical_loss_grad(const Loss& loss, std::span<const LabeledSample> data, const Vector& w);

Vector md_step(const MirrorGeometry& geom, const Loss& loss, const LabeledSample& sample,
               const Vector& w, double eta, const std::optional<Ball>& ball = std::nullopt);

MdTrajectory run_stochastic_md(const MirrorGeometry& geom, const Loss& loss, SampleStream& stream,
                               const Vector& w0, double eta, int t);
MdTrajectory run_stochastic_md(const MirrorGeometry& geom, const Loss& loss,
                               std::span<const LabeledSample> samples, const Vector& w0,
                               double eta);

// Full-batch MD. t > n is allowed and recorded as a warning unless
// allow_long_horizon is false, in which case it throws DomainError.
MdTrajectory run_batch_md(const MirrorGeometry& geom, const Loss& loss,
                          std::span<const LabeledSample> dataset, const Vector& w0, double eta,
                          int t, bool allow_long_horizon = true);

// --- coupled unconstrained / projected pairs ----------------------------------

// Record i holds w_i and v_i. projection_active means the projection moved
// the candidate that became v_i.
struct CoupledRecord {
  StepRecord step;
  Vector v;
  bool coupled = true;
  bool projection_active = false;
};

struct CoupledTrajectory {
  std::vector<CoupledRecord> records;
  Vector final_w;
  Vector final_v;
  bool final_coupled = true;
  bool final_projection_active = false;
  std::optional<int> first_divergence;  // first i with w_i != v_i
  double eta = 0.0;

  bool any_decoupling() const noexcept { return first_divergence.has_value(); }
};

CoupledTrajectory run_coupled(const MirrorGeometry& geom, const Loss& loss, SampleStream& stream,
                              const Vector& w0, const Vector& w_ref, double b_w, double eta,
                              int t);

// --- mirror flow ------------------------------------------------------------

struct FlowRecord {
  double time = 0.0;
  Vector q;
  Vector w;
  double inst_risk = 0.0;
};

struct FlowTrajectory {
  std::vector<FlowRecord> records;  // records[k].time == k h
  double h = 0.0;
};

// Classical RK4 on q' = -grad R^(grad psi*(q)), q_0 = grad psi(w_0). h <= 0
// selects the default 1e-3 t_final. The step is adjusted so that an integer
// number of steps lands exactly on t_final.
FlowTrajectory integrate_mirror_flow(const MirrorGeometry& geom, const Loss& loss,
                                     std::span<const LabeledSample> dataset, const Vector& w0,
                                     double t_final, double h = 0.0);

// --- TD(0) ------------------------------------------------------------------

// G(v) = x (<x - gamma x', v> - r)
Vector td_direction(const Vector& v, const TdTriple& triple, double gamma);

// w' = w - eta G(w). gamma must lie in (0, 1); allow_zero_gamma admits the
// diagnostic gamma = 0 reduction to squared-loss SGD.
Vector td_step(const Vector& w, const TdTriple& triple, double gamma, double eta,
               bool allow_zero_gamma = false);

struct TdRecord {
  int index = 0;
  Vector w;  // unconstrained w_i
  Vector v;  // projected v_i (== w when no ball)
  TdTriple triple;
  bool coupled = true;
  bool projection_active = false;
};

struct TdTrajectory {
  std::vector<TdRecord> records;
  Vector final_w;
  Vector final_v;
  bool final_coupled = true;
  bool final_projection_active = false;
  std::optional<int> first_divergence;
  double eta = 0.0;
  double gamma = 0.0;
  std::optional<Ball> ball;

  const Vector& iterate(std::size_t i) const {
    return i < records.size() ? records[i].w : final_w;
  }
  const Vector& projected_iterate(std::size_t i) const {
    return i < records.size() ? records[i].v : final_v;
  }
};

TdTrajectory run_td(std::span<const TdTriple> triples, const Vector& w0, double gamma, double eta,
                    const std::optional<Ball>& ball = std::nullopt, bool allow_zero_gamma = false);
TdTrajectory run_td(Rng& rng, const FiniteChain& chain, const Vector& w0, double gamma, double eta,
                    int t, const std::optional<Ball>& ball = std::nullopt);

}  // namespace mdlab
