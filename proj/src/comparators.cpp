#include "mdlab/comparators.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "mdlab/error.hpp"

namespace mdlab {

FiniteRisk::FiniteRisk(Loss loss, std::vector<Vector> points, std::vector<double> labels,
                       std::vector<double> weights)
    : loss_(std::move(loss)),
      points_(std::move(points)),
      labels_(std::move(labels)),
      weights_(std::move(weights)) {
  if (points_.empty() || points_.size() != labels_.size() || points_.size() != weights_.size()) {
    throw DomainError("FiniteRisk: points, labels and weights must be nonempty and aligned");
  }
}

FiniteRisk FiniteRisk::of(const Loss& loss, const DiscreteDistribution& dist) {
  dist.validate();
  return FiniteRisk(loss, dist.points, dist.labels, dist.probs);
}

FiniteRisk FiniteRisk::of(const Loss& loss, const FiniteChain& chain) {
  chain.validate();
  if (!chain.labels) throw DomainError("FiniteRisk: chain has no per-state labels");
  const Vector pi = stationary_distribution(chain.transition);
  std::vector<double> labels(chain.states()), weights(chain.states());
  for (int s = 0; s < chain.states(); ++s) {
    labels[s] = (*chain.labels)[s];
    weights[s] = pi[s];
  }
  return FiniteRisk(loss, chain.features, std::move(labels), std::move(weights));
}

double FiniteRisk::value(const Vector& w) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < points_.size(); ++k) {
    if (weights_[k] == 0.0) continue;
    acc += weights_[k] * loss_eval(loss_, labels_[k], points_[k].dot(w)).value;
  }
  return acc;
}

LossGrad FiniteRisk::value_grad(const Vector& w) const {
  require_same_dim(w, points_.front(), "FiniteRisk");
  LossGrad out{0.0, Vector::Zero(w.size())};
  for (std::size_t k = 0; k < points_.size(); ++k) {
    if (weights_[k] == 0.0) continue;
    const LossValue lv = loss_eval(loss_, labels_[k], points_[k].dot(w));
    out.value += weights_[k] * lv.value;
    out.grad += (weights_[k] * lv.deriv) * points_[k];
  }
  return out;
}

Matrix FiniteRisk::hessian(const Vector& w) const {
  Matrix h = Matrix::Zero(w.size(), w.size());
  for (std::size_t k = 0; k < points_.size(); ++k) {
    const double c = weights_[k] * loss_second(loss_, labels_[k], points_[k].dot(w));
    h += c * points_[k] * points_[k].transpose();
  }
  return h;
}

double FiniteRisk::infimum() const {
  if (inf_) return *inf_;
  if (loss_.kind() == Loss::Kind::absolute) {
    throw UnsupportedError("FiniteRisk::infimum: no curvature-based minimizer for absolute loss");
  }
  const int d = dim();
  Vector w = Vector::Zero(d);
  if (loss_.kind() == Loss::Kind::squared) {
    // Quadratic: one least-norm Newton step from 0 is exact.
    const LossGrad lg = value_grad(w);
    w = hessian(w).completeOrthogonalDecomposition().solve(-lg.grad);
    inf_ = value(w);
    return *inf_;
  }
  for (int it = 0; it < 500; ++it) {
    const LossGrad lg = value_grad(w);
    if (lg.grad.norm() <= 1e-13) {
      inf_ = lg.value;
      return *inf_;
    }
    const Matrix h = hessian(w);
    const double ridge = 1e-14 * (1.0 + h.trace());
    const Vector dir =
        (h + ridge * Matrix::Identity(d, d)).ldlt().solve(-lg.grad);
    double s = 1.0;
    double next = value(w + dir);
    while (next > lg.value - 1e-4 * s * (-lg.grad.dot(dir)) && s > 1e-12) {
      s *= 0.5;
      next = value(w + s * dir);
    }
    if (next >= lg.value) {
      // No further representable decrease.
      inf_ = lg.value;
      return *inf_;
    }
    w += s * dir;
    if (w.norm() > 1e8) break;
  }
  const double v = value(w);
  if (v < 1e-9) {
    // Separable support: the infimum 0 is approached but not attained.
    inf_ = 0.0;
    return *inf_;
  }
  throw ConvergenceError("FiniteRisk::infimum: Newton iteration did not converge",
                         value_grad(w).grad.norm());
}

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::regularized:
      return "regularized";
    case Provenance::margin:
      return "margin";
    case Provenance::svt:
      return "svt";
    case Provenance::sphere_axis:
      return "sphere_axis";
    case Provenance::td_fixed_point:
      return "td_fixed_point";
    case Provenance::user:
      return "user";
  }
  return "user";
}

Comparator user_comparator(const MirrorGeometry& geom, const FiniteRisk& risk, const Vector& w_ref,
                           const Vector& w0) {
  Comparator c;
  c.w_ref = w_ref;
  c.risk = risk.value(w_ref);
  c.excess_risk = risk.excess(w_ref);
  c.bregman_to_w0 = bregman_div(geom, w_ref, w0);
  c.provenance = Provenance::user;
  return c;
}

Comparator solve_u_ref(const MirrorGeometry& geom, const FiniteRisk& risk, const Vector& w0,
                       double lambda, const UrefOptions& opts) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError("solve_u_ref: lambda must be positive and finite");
  }
  const Vector dual_w0 = geom.grad_psi(w0);
  auto objective = [&](const Vector& u) {
    return risk.value(u) + 0.5 * lambda * bregman_div(geom, u, w0);
  };
  auto gradient = [&](const Vector& u) {
    return Vector(risk.value_grad(u).grad + 0.5 * lambda * (geom.grad_psi(u) - dual_w0));
  };

  Vector u = w0;
  double f = objective(u);
  double step = 1.0;
  double gnorm = INFINITY;
  long it = 0;
  for (; it < opts.max_iter; ++it) {
    const Vector g = gradient(u);
    gnorm = geom.dual_norm(g);
    if (gnorm <= opts.grad_tol) break;
    const double g2 = g.squaredNorm();
    // Once the required decrease drops below the resolution of f, accept on a
    // decrease of the gradient norm instead.
    const double resolution = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(f);
    for (;;) {
      const Vector cand = u - step * g;
      const double fc = objective(cand);
      const bool armijo = fc <= f - 1e-4 * step * g2;
      const bool accept = armijo || (1e-4 * step * g2 <= resolution &&
                                     geom.dual_norm(gradient(cand)) < gnorm);
      if (accept) {
        u = cand;
        f = fc;
        if (armijo) step = std::min(step * 2.0, 1e6);
        break;
      }
      step *= 0.5;
      if (step < 1e-30) {
        throw ConvergenceError("solve_u_ref: line search collapsed", gnorm);
      }
    }
  }
  if (gnorm > opts.grad_tol) {
    throw ConvergenceError(
        fmt::format("solve_u_ref: gradient norm {} above {} after {} iterations", gnorm,
                    opts.grad_tol, it),
        gnorm);
  }
  Comparator c;
  c.w_ref = u;
  c.risk = risk.value(u);
  c.excess_risk = risk.excess(u);
  c.bregman_to_w0 = bregman_div(geom, u, w0);
  c.provenance = Provenance::regularized;
  c.diagnostics["lambda"] = lambda;
  c.diagnostics["iterations"] = static_cast<double>(it);
  c.diagnostics["grad_norm"] = gnorm;
  const double slack = lambda * c.bregman_to_w0 + 1e-6 - c.excess_risk;
  c.diagnostics["claim_slack"] = slack;
  if (slack < 0.0) {
    c.warnings.push_back(fmt::format(
        "E(u_ref) = {:.6g} exceeds lambda D(u_ref, w0) = {:.6g} at lambda = {}", c.excess_risk,
        lambda * c.bregman_to_w0, lambda));
  }
  return c;
}

double t_ref(const Comparator& c) {
  if (c.excess_risk <= 1e-14) return INFINITY;
  const double ratio = c.bregman_to_w0 / c.excess_risk;
  return std::floor(ratio * ratio);
}

Comparator margin_comparator(const Vector& u, double gamma_t, double t,
                             const MirrorGeometry& geom, const Vector* w0) {
  require_finite(u, "margin_comparator");
  if (std::abs(u.norm() - 1.0) > 1e-10) {
    throw DomainError(fmt::format("margin_comparator: |u| = {} is not 1", u.norm()));
  }
  if (!(gamma_t > 0.0 && gamma_t <= 1.0)) {
    throw DomainError(fmt::format("margin_comparator: gamma_t = {} outside (0, 1]", gamma_t));
  }
  if (!(t >= 2.0)) throw DomainError("margin_comparator: t must be at least 2");
  Comparator c;
  c.w_ref = u * (std::log(t) / gamma_t);
  c.risk_ceiling = (2.0 + std::log(t) / gamma_t) / t;
  c.excess_risk = *c.risk_ceiling;
  const Vector zero = Vector::Zero(u.size());
  c.bregman_to_w0 = bregman_div(geom, c.w_ref, w0 ? *w0 : zero);
  c.provenance = Provenance::margin;
  c.diagnostics["gamma_t"] = gamma_t;
  c.diagnostics["t"] = t;
  return c;
}

double estimate_margin(const Vector& u, std::span<const LabeledSample> calibration, double t) {
  if (calibration.empty()) throw DomainError("estimate_margin: empty calibration sample");
  if (!(t >= 1.0)) throw DomainError("estimate_margin: t must be at least 1");
  std::vector<double> m;
  m.reserve(calibration.size());
  for (const auto& s : calibration) m.push_back(s.y * s.x.dot(u));
  std::sort(m.begin(), m.end());
  const double n = static_cast<double>(m.size());
  const auto j = std::min(m.size() - 1, static_cast<std::size_t>(std::floor(n / t)));
  return m[j];
}

SvtResult svt_comparator(const Matrix& second_moment, const Vector& cross_moment, int k) {
  const auto d = second_moment.rows();
  if (second_moment.cols() != d || cross_moment.size() != d) {
    throw DomainError("svt_comparator: moment dimensions disagree");
  }
  if (k < 1 || k > d) throw DomainError(fmt::format("svt_comparator: k = {} outside [1, {}]", k, d));
  const double scale = std::max(1.0, second_moment.cwiseAbs().maxCoeff());
  if ((second_moment - second_moment.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DomainError("svt_comparator: second moment is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(second_moment);
  if (eig.info() != Eigen::Success) throw DomainError("svt_comparator: eigendecomposition failed");
  const Vector& vals = eig.eigenvalues();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return vals[a] > vals[b]; });
  const double top = vals[order.front()];
  if (vals[order.back()] < -1e-12 * std::max(top, 1.0)) {
    throw DomainError("svt_comparator: second moment is not positive semidefinite");
  }
  const double cutoff = 1e-12 * top;

  SvtResult out;
  out.eigenvalues.resize(d);
  out.eigenvectors.resize(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    out.eigenvalues[j] = vals[order[j]];
    out.eigenvectors.col(j) = eig.eigenvectors().col(order[j]);
  }
  Vector w = Vector::Zero(d);
  Vector w_full = Vector::Zero(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double lam = out.eigenvalues[j];
    if (!(lam > cutoff)) continue;
    const Vector& v = out.eigenvectors.col(j);
    const Vector contrib = v * (v.dot(cross_moment) / lam);
    w_full += contrib;
    if (j < k) {
      w += contrib;
      ++out.kept;
    }
  }
  Comparator& c = out.comparator;
  c.w_ref = w;
  const Vector diff = w - w_full;
  c.excess_risk = std::max(0.0, 0.5 * diff.dot(second_moment * diff));
  c.bregman_to_w0 = 0.5 * w.squaredNorm();
  c.provenance = Provenance::svt;
  c.diagnostics["k"] = k;
  c.diagnostics["kept"] = out.kept;
  const double sigma_k = out.eigenvalues[k - 1];
  if (sigma_k > cutoff) c.diagnostics["norm_sq_times_sigma_k_sq"] = w.squaredNorm() * sigma_k * sigma_k;
  return out;
}

Comparator sphere_axis_comparator(double t, int d) {
  if (!(t >= 1.0)) throw DomainError("sphere_axis_comparator: t must be at least 1");
  if (d < 2) throw DomainError("sphere_axis_comparator: d must be at least 2");
  const double r = std::pow(t, -1.0 / 3.0);
  Comparator c;
  c.w_ref = Vector::Zero(d);
  c.w_ref[0] = r;
  c.risk = sphere_risk_exact(r);
  // The sphere law is separable by e1, so inf R = 0.
  c.excess_risk = *c.risk;
  c.bregman_to_w0 = 0.5 * r * r;
  c.provenance = Provenance::sphere_axis;
  const double ratio = std::max(r, *c.risk) * std::cbrt(t);
  c.diagnostics["order_ratio"] = ratio;
  c.diagnostics["r"] = r;
  return c;
}

TdFixedPoint td_fixed_point(const FiniteChain& chain, double gamma) {
  chain.validate();
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw DomainError(fmt::format("td_fixed_point: gamma = {} outside (0, 1)", gamma));
  }
  const Vector pi = stationary_distribution(chain.transition);
  const int d = chain.dim();
  TdFixedPoint fp;
  fp.a = Matrix::Zero(d, d);
  fp.b = Vector::Zero(d);
  for (int s = 0; s < chain.states(); ++s) {
    Vector next_mean = Vector::Zero(d);
    for (int u = 0; u < chain.states(); ++u) next_mean += chain.transition(s, u) * chain.features[u];
    const Vector& x = chain.features[s];
    fp.a += pi[s] * x * (x - gamma * next_mean).transpose();
    fp.b += (pi[s] * chain.expected_reward(s)) * x;
  }
  fp.w_star = fp.a.completeOrthogonalDecomposition().solve(fp.b);
  const double res = fp.residual(fp.w_star);
  if (!fp.w_star.allFinite() || res > 1e-9 * (1.0 + fp.b.norm())) {
    throw DomainError(fmt::format("td_fixed_point: system is singular (residual {})", res));
  }
  return fp;
}

Comparator td_comparator(const TdFixedPoint& fp, const Vector& w_ref, const Vector& w0) {
  Comparator c;
  c.w_ref = w_ref;
  c.excess_risk = fp.residual(w_ref);
  c.bregman_to_w0 = 0.5 * (w_ref - w0).squaredNorm();
  c.provenance = Provenance::td_fixed_point;
  return c;
}

}  // namespace mdlab
