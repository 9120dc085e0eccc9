#include "mdlab/solvers.hpp"

#include <cmath>
#include <fmt/format.h>

#include "mdlab/error.hpp"

namespace mdlab {

namespace {

void require_positive_eta(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw DomainError(fmt::format("step size must be positive and finite, got {}", eta));
  }
}

void require_gamma(double gamma, bool allow_zero) {
  const bool ok = allow_zero ? (gamma >= 0.0 && gamma < 1.0) : (gamma > 0.0 && gamma < 1.0);
  if (!ok) throw DomainError(fmt::format("discount gamma = {} outside (0, 1)", gamma));
}

// Unconstrained mirror step from a precomputed gradient. The Euclidean branch
// is a plain subtraction so coupled runs share one arithmetic path.
Vector mirror_update(const MirrorGeometry& geom, const Vector& w, const Vector& g, double eta) {
  if (geom.is_euclidean()) return w - eta * g;
  return geom.grad_psi_star(geom.grad_psi(w) - eta * g);
}

StepRecord make_record(const MirrorGeometry& geom, int index, const Vector& w, LossGrad lg,
                       double eta) {
  StepRecord r;
  r.index = index;
  r.w = w;
  r.grad_dual_norm = geom.dual_norm(lg.grad);
  r.grad = std::move(lg.grad);
  r.inst_loss = lg.value;
  r.step_size = eta;
  return r;
}

}  // namespace

LossGrad sample_loss_grad(const Loss& loss, const LabeledSample& s, const Vector& w) {
  require_same_dim(s.x, w, "sample_loss_grad");
  const LossValue lv = loss_eval(loss, s.y, s.x.dot(w));
  return {lv.value, lv.deriv * s.x};
}

LossGrad empirical_loss_grad(const Loss& loss, std::span<const LabeledSample> data,
                             const Vector& w) {
  if (data.empty()) throw DomainError("empirical risk of an empty dataset");
  LossGrad out{0.0, Vector::Zero(w.size())};
  for (const auto& s : data) {
    require_same_dim(s.x, w, "empirical_loss_grad");
    const LossValue lv = loss_eval(loss, s.y, s.x.dot(w));
    out.value += lv.value;
    out.grad += lv.deriv * s.x;
  }
  const double n = static_cast<double>(data.size());
  out.value /= n;
  out.grad /= n;
  return out;
}

Vector md_step(const MirrorGeometry& geom, const Loss& loss, const LabeledSample& sample,
               const Vector& w, double eta, const std::optional<Ball>& ball) {
  require_positive_eta(eta);
  const Vector g = sample_loss_grad(loss, sample, w).grad;
  if (!ball) return mirror_update(geom, w, g, eta);
  if (!geom.is_euclidean()) {
    throw UnsupportedError("ball-constrained mirror descent needs the Euclidean geometry");
  }
  return project_ball(ball->center, ball->radius, w - eta * g);
}

MdTrajectory run_stochastic_md(const MirrorGeometry& geom, const Loss& loss, SampleStream& stream,
                               const Vector& w0, double eta, int t) {
  require_positive_eta(eta);
  if (t < 0) throw DomainError("run_stochastic_md: negative horizon");
  require_finite(w0, "run_stochastic_md w0");
  MdTrajectory traj;
  traj.eta = eta;
  traj.steps.reserve(static_cast<std::size_t>(t));
  Vector w = w0;
  for (int i = 0; i < t; ++i) {
    LabeledSample s = stream.next();
    LossGrad lg = sample_loss_grad(loss, s, w);
    Vector next = mirror_update(geom, w, lg.grad, eta);
    traj.steps.push_back(make_record(geom, i, w, std::move(lg), eta));
    traj.steps.back().sample = std::move(s);
    w = std::move(next);
  }
  traj.final_w = std::move(w);
  return traj;
}

MdTrajectory run_stochastic_md(const MirrorGeometry& geom, const Loss& loss,
                               std::span<const LabeledSample> samples, const Vector& w0,
                               double eta) {
  require_positive_eta(eta);
  MdTrajectory traj;
  traj.eta = eta;
  Vector w = w0;
  int i = 0;
  for (const auto& s : samples) {
    LossGrad lg = sample_loss_grad(loss, s, w);
    Vector next = mirror_update(geom, w, lg.grad, eta);
    traj.steps.push_back(make_record(geom, i++, w, std::move(lg), eta));
    traj.steps.back().sample = s;
    w = std::move(next);
  }
  traj.final_w = std::move(w);
  return traj;
}

MdTrajectory run_batch_md(const MirrorGeometry& geom, const Loss& loss,
                          std::span<const LabeledSample> dataset, const Vector& w0, double eta,
                          int t, bool allow_long_horizon) {
  require_positive_eta(eta);
  if (dataset.empty()) throw DomainError("run_batch_md: empty dataset");
  if (t < 0) throw DomainError("run_batch_md: negative horizon");
  MdTrajectory traj;
  traj.eta = eta;
  traj.batch = true;
  if (static_cast<std::size_t>(t) > dataset.size()) {
    const auto msg = fmt::format("batch horizon t = {} exceeds dataset size n = {}", t,
                                 dataset.size());
    if (!allow_long_horizon) throw DomainError(msg);
    traj.warnings.push_back(msg);
  }
  traj.steps.reserve(static_cast<std::size_t>(t));
  Vector w = w0;
  for (int i = 0; i < t; ++i) {
    LossGrad lg = empirical_loss_grad(loss, dataset, w);
    Vector next = mirror_update(geom, w, lg.grad, eta);
    traj.steps.push_back(make_record(geom, i, w, std::move(lg), eta));
    w = std::move(next);
  }
  traj.final_w = std::move(w);
  return traj;
}

CoupledTrajectory run_coupled(const MirrorGeometry& geom, const Loss& loss, SampleStream& stream,
                              const Vector& w0, const Vector& w_ref, double b_w, double eta,
                              int t) {
  if (!geom.is_euclidean()) {
    throw UnsupportedError("coupled runs are implemented for the Euclidean geometry only");
  }
  require_positive_eta(eta);
  if (!(b_w > 0.0)) throw DomainError("run_coupled: B_w must be positive");
  require_same_dim(w0, w_ref, "run_coupled");
  CoupledTrajectory traj;
  traj.eta = eta;
  traj.records.reserve(static_cast<std::size_t>(std::max(t, 0)));
  Vector w = w0;
  Vector v = w0;
  bool coupled = true;
  bool active = false;
  for (int i = 0; i < t; ++i) {
    LabeledSample s = stream.next();
    LossGrad lg = sample_loss_grad(loss, s, w);
    Vector next_w = w - eta * lg.grad;
    Vector cand_v = coupled ? next_w : Vector(v - eta * sample_loss_grad(loss, s, v).grad);
    const bool next_active = outside_ball(w_ref, b_w, cand_v);
    Vector next_v = next_active ? project_ball(w_ref, b_w, cand_v) : std::move(cand_v);

    CoupledRecord rec;
    rec.step = make_record(geom, i, w, std::move(lg), eta);
    rec.step.sample = std::move(s);
    rec.v = v;
    rec.coupled = coupled;
    rec.projection_active = active;
    traj.records.push_back(std::move(rec));

    w = std::move(next_w);
    v = std::move(next_v);
    active = next_active;
    coupled = (w.array() == v.array()).all();
    if (!coupled && !traj.first_divergence) traj.first_divergence = i + 1;
  }
  traj.final_w = std::move(w);
  traj.final_v = std::move(v);
  traj.final_coupled = coupled;
  traj.final_projection_active = active;
  return traj;
}

FlowTrajectory integrate_mirror_flow(const MirrorGeometry& geom, const Loss& loss,
                                     std::span<const LabeledSample> dataset, const Vector& w0,
                                     double t_final, double h) {
  if (dataset.empty()) throw DomainError("integrate_mirror_flow: empty dataset");
  if (!(t_final > 0.0) || !std::isfinite(t_final)) {
    throw DomainError("integrate_mirror_flow: t_final must be positive");
  }
  if (h <= 0.0) h = 1e-3 * t_final;
  require_finite(w0, "integrate_mirror_flow w0");
  const Vector q0 = geom.grad_psi(w0);
  if ((geom.grad_psi_star(q0) - w0).norm() > 1e-10 * (1.0 + w0.norm())) {
    throw DomainError("integrate_mirror_flow: mirror map fails the Legendre roundtrip at w0");
  }
  const long steps = std::max(1L, std::lround(t_final / h));
  h = t_final / static_cast<double>(steps);

  auto field = [&](const Vector& q) -> Vector {
    return -empirical_loss_grad(loss, dataset, geom.grad_psi_star(q)).grad;
  };
  auto record = [&](double time, const Vector& q) {
    FlowRecord r;
    r.time = time;
    r.q = q;
    r.w = geom.grad_psi_star(q);
    r.inst_risk = empirical_loss_grad(loss, dataset, r.w).value;
    return r;
  };

  FlowTrajectory flow;
  flow.h = h;
  flow.records.reserve(static_cast<std::size_t>(steps) + 1);
  Vector q = q0;
  flow.records.push_back(record(0.0, q));
  for (long k = 0; k < steps; ++k) {
    const Vector k1 = field(q);
    const Vector k2 = field(q + 0.5 * h * k1);
    const Vector k3 = field(q + 0.5 * h * k2);
    const Vector k4 = field(q + h * k3);
    q += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double time = static_cast<double>(k + 1) * h;
    if (!q.allFinite()) {
      throw DomainError(fmt::format("mirror flow diverged at time {}", time));
    }
    flow.records.push_back(record(time, q));
  }
  return flow;
}

Vector td_direction(const Vector& v, const TdTriple& triple, double gamma) {
  require_same_dim(v, triple.x, "td_direction");
  require_same_dim(v, triple.x_next, "td_direction");
  return triple.x * ((triple.x - gamma * triple.x_next).dot(v) - triple.r);
}

Vector td_step(const Vector& w, const TdTriple& triple, double gamma, double eta,
               bool allow_zero_gamma) {
  require_gamma(gamma, allow_zero_gamma);
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError("td_step: eta must be >= 0");
  return w - eta * td_direction(w, triple, gamma);
}

TdTrajectory run_td(std::span<const TdTriple> triples, const Vector& w0, double gamma, double eta,
                    const std::optional<Ball>& ball, bool allow_zero_gamma) {
  require_gamma(gamma, allow_zero_gamma);
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError("run_td: eta must be >= 0");
  if (ball && !(ball->radius > 0.0)) throw DomainError("run_td: ball radius must be positive");
  TdTrajectory traj;
  traj.eta = eta;
  traj.gamma = gamma;
  traj.ball = ball;
  traj.records.reserve(triples.size());
  Vector w = w0;
  Vector v = w0;
  bool coupled = true;
  bool active = false;
  int i = 0;
  for (const auto& z : triples) {
    Vector next_w = w - eta * td_direction(w, z, gamma);
    Vector next_v;
    bool next_active = false;
    if (!ball) {
      next_v = next_w;
    } else {
      Vector cand = coupled ? next_w : Vector(v - eta * td_direction(v, z, gamma));
      next_active = outside_ball(ball->center, ball->radius, cand);
      next_v = next_active ? project_ball(ball->center, ball->radius, cand) : std::move(cand);
    }
    traj.records.push_back({i, w, v, z, coupled, active});
    w = std::move(next_w);
    v = std::move(next_v);
    active = next_active;
    coupled = (w.array() == v.array()).all();
    if (!coupled && !traj.first_divergence) traj.first_divergence = i + 1;
    ++i;
  }
  traj.final_w = std::move(w);
  traj.final_v = std::move(v);
  traj.final_coupled = coupled;
  traj.final_projection_active = active;
  return traj;
}

TdTrajectory run_td(Rng& rng, const FiniteChain& chain, const Vector& w0, double gamma, double eta,
                    int t, const std::optional<Ball>& ball) {
  if (t < 0) throw DomainError("run_td: negative horizon");
  const auto triples = td_stream(rng, chain, static_cast<std::size_t>(t));
  return run_td(triples, w0, gamma, eta, ball);
}

}  // namespace mdlab
