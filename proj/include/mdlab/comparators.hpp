#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdlab/data.hpp"
#include "mdlab/geometry.hpp"
#include "mdlab/losses.hpp"
#include "mdlab/solvers.hpp"

namespace mdlab {

// Exact population risk of a finite-support law: sum_k p_k l(y_k, <x_k, w>).
class FiniteRisk {
 public:
  FiniteRisk(Loss loss, std::vector<Vector> points, std::vector<double> labels,
             std::vector<double> weights);
  static FiniteRisk of(const Loss& loss, const DiscreteDistribution& dist);
  // Risk under the stationary law of a labeled chain.
  static FiniteRisk of(const Loss& loss, const FiniteChain& chain);

  int dim() const { return static_cast<int>(points_.front().size()); }
  const Loss& loss() const noexcept { return loss_; }
  double value(const Vector& w) const;
  LossGrad value_grad(const Vector& w) const;
  Matrix hessian(const Vector& w) const;
  // inf_w R(w), by damped Newton. Cached after the first call. Throws
  // UnsupportedError for losses without curvature (absolute).
  double infimum() const;
  double excess(const Vector& w) const { return std::max(0.0, value(w) - infimum()); }

 private:
  Loss loss_;
  std::vector<Vector> points_;
  std::vector<double> labels_;
  std::vector<double> weights_;
  mutable std::optional<double> inf_;
};

enum class Provenance { regularized, margin, svt, sphere_axis, td_fixed_point, user };
const char* provenance_name(Provenance p);

struct Comparator {
  Vector w_ref;
  double excess_risk = 0.0;
  double bregman_to_w0 = 0.0;
  Provenance provenance = Provenance::user;
  std::optional<double> risk;          // R(w_ref) when known exactly
  std::optional<double> risk_ceiling;  // certified upper bound on R(w_ref)
  std::map<std::string, double> diagnostics;
  std::vector<std::string> warnings;
};

Comparator user_comparator(const MirrorGeometry& geom, const FiniteRisk& risk, const Vector& w_ref,
                           const Vector& w0);

struct UrefOptions {
  double grad_tol = 1e-8;
  long max_iter = 1'000'000;
};

// argmin R(u) + (lambda/2) D_psi(u, w0) by gradient descent with Armijo
// backtracking, started at w0. Throws ConvergenceError past max_iter. The
// claimed E(u) <= lambda D(u, w0) is recorded in diagnostics
// ("claim_slack" = lambda D + 1e-6 - E) and in warnings when it fails.
Comparator solve_u_ref(const MirrorGeometry& geom, const FiniteRisk& risk, const Vector& w0,
                       double lambda, const UrefOptions& opts = {});

// +infinity when E <= 1e-14, else floor((D / E)^2).
double t_ref(const Comparator& c);

// w_ref = u ln(t) / gamma_t with ceiling (2 + ln(t)/gamma_t)/t on R(w_ref).
// excess_risk is set to that ceiling (an upper bound; R* is not known here).
Comparator margin_comparator(const Vector& u, double gamma_t, double t,
                             const MirrorGeometry& geom = MirrorGeometry::euclidean(),
                             const Vector* w0 = nullptr);

// Largest gamma with empirical Pr[y <x, u> >= gamma] >= 1 - 1/t.
double estimate_margin(const Vector& u, std::span<const LabeledSample> calibration, double t);

struct SvtResult {
  Comparator comparator;
  Vector eigenvalues;  // sorted, descending
  Matrix eigenvectors;
  int kept = 0;        // eigenvalues actually inverted (k minus numerically-zero ones)
};

// [Sigma]_k^+ c with the top-k eigenpairs (ties: larger value, then smaller
// index). Eigenvalues below 1e-12 lambda_max count as zero. The comparator's
// excess risk is (1/2)(w - w*)^T Sigma (w - w*) with w* = Sigma^+ c, and
// bregman_to_w0 is |w|^2/2 (w0 = 0).
SvtResult svt_comparator(const Matrix& second_moment, const Vector& cross_moment, int k);

// w_ref = e1 t^{-1/3}; attaches R(w_ref) = sphere_risk_exact(t^{-1/3}) and the
// ratio max{|w_ref|, R(w_ref)} t^{1/3} as "order_ratio".
Comparator sphere_axis_comparator(double t, int d);

struct TdFixedPoint {
  Vector w_star;
  Matrix a;  // E_pi[x (x - gamma x')^T]
  Vector b;  // E_pi[x r]
  double residual(const Vector& w) const { return (a * w - b).norm(); }
  // E_pi G(w) = A w - b.
  Vector mean_direction(const Vector& w) const { return a * w - b; }
};

TdFixedPoint td_fixed_point(const FiniteChain& chain, double gamma);
Comparator td_comparator(const TdFixedPoint& fp, const Vector& w_ref, const Vector& w0);

}  // namespace mdlab
