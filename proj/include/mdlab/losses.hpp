#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mdlab {

enum class LossForm { classification, regression };

struct QbConstants {
  double c1 = 0.0;
  double c2 = 0.0;
};

// A convex scalar auxiliary function l~ plus the way it is lifted to a loss
// l(y, yhat): classification uses l~(sgn(y) yhat) with sgn(0) = +1,
// regression uses l~(y - yhat).
class Loss {
 public:
  enum class Kind { squared, logistic, absolute };

  static Loss squared();   // l~(z) = z^2 / 2, regression
  static Loss logistic();  // l~(z) = ln(1 + e^{-z}), classification
  static Loss absolute();  // l~(z) = |z|, regression

  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }
  LossForm form() const noexcept { return form_; }
  QbConstants qb() const noexcept { return qb_; }
  std::optional<double> self_bounding_rho() const noexcept { return rho_; }
  std::optional<double> lipschitz_alpha() const noexcept { return alpha_; }
  std::optional<double> smooth_beta() const noexcept { return beta_; }

  double tilde(double z) const;
  // Selection from the subdifferential; 0 at the kink of |z|.
  double tilde_deriv(double z) const;
  // Second derivative where it exists (0 for the absolute loss).
  double tilde_second(double z) const;

 private:
  Loss(Kind kind, std::string name, LossForm form, QbConstants qb, std::optional<double> rho,
       std::optional<double> alpha, std::optional<double> beta);

  Kind kind_;
  std::string name_;
  LossForm form_;
  QbConstants qb_;
  std::optional<double> rho_;
  std::optional<double> alpha_;
  std::optional<double> beta_;
};

inline double sgn_label(double y) { return y >= 0.0 ? 1.0 : -1.0; }

struct LossValue {
  double value;
  double deriv;  // d/d yhat
};

LossValue loss_eval(const Loss& loss, double y, double yhat);

// Second derivative of l(y, .) in yhat.
double loss_second(const Loss& loss, double y, double yhat);

struct PropertyReport {
  std::string property;
  bool passed = false;
  double max_violation = 0.0;
  // Where the worst violation occurred (first coordinate pair for 2-D grids).
  double at_first = 0.0;
  double at_second = 0.0;
};

inline constexpr double kPropertyTolerance = 1e-12;

std::vector<double> linspace(double lo, double hi, std::size_t n);

// Default grids: z in linspace(-30, 30, 2001), (y, yhat) in linspace(-10, 10, 201)^2.
std::vector<double> default_z_grid();
std::vector<std::pair<double, double>> default_yyhat_grid();

PropertyReport check_quadratic_bounded(const Loss& loss, QbConstants claimed,
                                       std::span<const std::pair<double, double>> grid);
PropertyReport check_self_bounding(const Loss& loss, double rho, std::span<const double> z_grid);
PropertyReport check_lipschitz(const Loss& loss, double alpha, std::span<const double> z_grid);
// Pairwise |l~'(z) - l~'(z')| <= beta |z - z'| over all grid pairs.
PropertyReport check_smooth(const Loss& loss, double beta, std::span<const double> z_grid);
// Midpoint convexity over all grid pairs.
PropertyReport check_convex(const Loss& loss, std::span<const double> z_grid);
PropertyReport check_nonnegative(const Loss& loss, std::span<const double> z_grid);

// Lipschitz gives (alpha, 0); smoothness gives (|l~'(0)|, beta). When both are
// known the pair with smaller c1 + c2 wins, ties going to the Lipschitz pair.
QbConstants qb_from_lip_or_smooth(std::optional<double> alpha, std::optional<double> beta,
                                  double deriv_at_zero);

}  // namespace mdlab
