#include "mdlab/geometry.hpp"

#include <cmath>
#include <fmt/format.h>

#include "mdlab/error.hpp"

namespace mdlab {

namespace {

// |v|_r computed with max-abs scaling so large exponents do not overflow.
double lr_norm(const Vector& v, double r) {
  const double scale = v.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    acc += std::pow(std::abs(v[i]) / scale, r);
  }
  return scale * std::pow(acc, 1.0 / r);
}

// Gradient of |v|_r^2 / 2: |v|_r^{2-r} sign(v_i) |v_i|^{r-1}.
Vector half_sq_norm_grad(const Vector& v, double r) {
  const double n = lr_norm(v, r);
  Vector out = Vector::Zero(v.size());
  if (n == 0.0) return out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]) / n;
    out[i] = std::copysign(n * std::pow(a, r - 1.0), v[i]);
  }
  return out;
}

}  // namespace

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) {
    throw DomainError(fmt::format("{}: non-finite coordinate", what));
  }
}

void require_same_dim(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    throw DomainError(
        fmt::format("{}: dimension mismatch ({} vs {})", what, a.size(), b.size()));
  }
}

MirrorGeometry::MirrorGeometry(Kind kind, std::string name, double p, double c6)
    : kind_(kind), name_(std::move(name)), p_(p), q_(p / (p - 1.0)), c6_(c6) {}

MirrorGeometry MirrorGeometry::euclidean() {
  return MirrorGeometry(Kind::euclidean, "euclidean", 2.0, 1.0);
}

MirrorGeometry MirrorGeometry::p_norm(double p, double rademacher_c6) {
  if (!(p > 1.0 && p <= 2.0)) {
    throw DomainError(fmt::format("p-norm geometry needs p in (1, 2], got {}", p));
  }
  if (!(rademacher_c6 >= 0.0) || !std::isfinite(rademacher_c6)) {
    throw DomainError("p-norm geometry needs a finite nonnegative Rademacher constant");
  }
  return MirrorGeometry(Kind::p_norm, fmt::format("pnorm({})", p), p, rademacher_c6);
}

double MirrorGeometry::primal_norm(const Vector& w) const {
  return is_euclidean() ? w.norm() : lr_norm(w, p_);
}

double MirrorGeometry::dual_norm(const Vector& g) const {
  return is_euclidean() ? g.norm() : lr_norm(g, q_);
}

double MirrorGeometry::psi(const Vector& w) const {
  if (is_euclidean()) return 0.5 * w.squaredNorm();
  const double n = lr_norm(w, p_);
  return n * n / (2.0 * (p_ - 1.0));
}

Vector MirrorGeometry::grad_psi(const Vector& w) const {
  if (is_euclidean()) return w;
  return half_sq_norm_grad(w, p_) / (p_ - 1.0);
}

Vector MirrorGeometry::grad_psi_star(const Vector& theta) const {
  if (is_euclidean()) return theta;
  return (p_ - 1.0) * half_sq_norm_grad(theta, q_);
}

double bregman_div(const MirrorGeometry& geom, const Vector& w, const Vector& v) {
  require_same_dim(w, v, "bregman_div");
  require_finite(w, "bregman_div");
  require_finite(v, "bregman_div");
  if (geom.is_euclidean()) return 0.5 * (w - v).squaredNorm();
  const double d = geom.psi(w) - geom.psi(v) - geom.grad_psi(v).dot(w - v);
  return d > 0.0 ? d : 0.0;
}

bool outside_ball(const Vector& center, double radius, const Vector& v) {
  return (v - center).norm() > radius;
}

Vector project_ball(const Vector& center, double radius, const Vector& v) {
  if (!(radius > 0.0)) {
    throw DomainError(fmt::format("project_ball: radius must be positive, got {}", radius));
  }
  require_same_dim(center, v, "project_ball");
  const Vector offset = v - center;
  const double dist = offset.norm();
  if (dist <= radius) return v;
  Vector out = center + offset * (radius / dist);
  // Guard the closed-ball postcondition against the last-ulp overshoot.
  double r = radius;
  while ((out - center).norm() > radius) {
    r = std::nextafter(r, 0.0);
    out = center + offset * (r / dist);
  }
  return out;
}

}  // namespace mdlab
