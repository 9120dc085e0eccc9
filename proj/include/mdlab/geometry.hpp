#pragma once

#include <Eigen/Dense>
#include <string>

namespace mdlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Throws DomainError if any coordinate is NaN or infinite.
void require_finite(const Vector& v, const char* what);
void require_same_dim(const Vector& a, const Vector& b, const char* what);

// A mirror map together with its primal/dual norm pair.
//
// Two families are provided:
//  - Euclidean: psi(w) = |w|_2^2 / 2, both norms l2, Rademacher constant 1.
//  - p-norm (1 < p <= 2): psi(w) = |w|_p^2 / (2(p-1)), which is 1-strongly
//    convex w.r.t. |.|_p. The dual norm is |.|_q with 1/p + 1/q = 1 and the
//    gradient of the conjugate is grad psi*(theta) = (p-1) grad(|theta|_q^2 / 2).
//    The Rademacher constant is not known in closed form here and must be
//    supplied by the caller.
class MirrorGeometry {
 public:
  enum class Kind { euclidean, p_norm };

  static MirrorGeometry euclidean();
  static MirrorGeometry p_norm(double p, double rademacher_c6);

  Kind kind() const noexcept { return kind_; }
  bool is_euclidean() const noexcept { return kind_ == Kind::euclidean; }
  const std::string& name() const noexcept { return name_; }
  double p() const noexcept { return p_; }
  double q() const noexcept { return q_; }
  double rademacher_c6() const noexcept { return c6_; }

  double primal_norm(const Vector& w) const;
  double dual_norm(const Vector& g) const;
  double psi(const Vector& w) const;
  Vector grad_psi(const Vector& w) const;
  Vector grad_psi_star(const Vector& theta) const;

 private:
  MirrorGeometry(Kind kind, std::string name, double p, double c6);

  Kind kind_;
  std::string name_;
  double p_;
  double q_;
  double c6_;
};

// D_psi(w, v) = psi(w) - psi(v) - <grad psi(v), w - v>, clamped at 0 against
// rounding.
double bregman_div(const MirrorGeometry& geom, const Vector& w, const Vector& v);

// Euclidean projection onto the closed ball {u : |u - center|_2 <= radius}.
// Interior points are returned as an unmodified copy so that coupled runs can
// compare iterates bitwise.
Vector project_ball(const Vector& center, double radius, const Vector& v);

// True iff projection would move v (i.e. v lies strictly outside the ball).
bool outside_ball(const Vector& center, double radius, const Vector& v);

}  // namespace mdlab
