#include "mdlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "mdlab/error.hpp"

namespace mdlab {

Loss::Loss(Kind kind, std::string name, LossForm form, QbConstants qb, std::optional<double> rho,
           std::optional<double> alpha, std::optional<double> beta)
    : kind_(kind),
      name_(std::move(name)),
      form_(form),
      qb_(qb),
      rho_(rho),
      alpha_(alpha),
      beta_(beta) {}

Loss Loss::squared() {
  return Loss(Kind::squared, "squared", LossForm::regression, {0.0, 1.0}, 1.0, std::nullopt, 1.0);
}

Loss Loss::logistic() {
  return Loss(Kind::logistic, "logistic", LossForm::classification, {1.0, 0.0}, 0.5, 1.0, 0.25);
}

Loss Loss::absolute() {
  return Loss(Kind::absolute, "absolute", LossForm::regression, {1.0, 0.0}, std::nullopt, 1.0,
              std::nullopt);
}

double Loss::tilde(double z) const {
  switch (kind_) {
    case Kind::squared:
      return 0.5 * z * z;
    case Kind::logistic:
      // ln(1 + e^{-z}) = max(0, -z) + ln(1 + e^{-|z|})
      return std::max(0.0, -z) + std::log1p(std::exp(-std::abs(z)));
    case Kind::absolute:
      return std::abs(z);
  }
  return 0.0;
}

double Loss::tilde_deriv(double z) const {
  switch (kind_) {
    case Kind::squared:
      return z;
    case Kind::logistic:
      // -1 / (1 + e^{z}), evaluated without overflow on either side.
      if (z >= 0.0) {
        const double e = std::exp(-z);
        return -e / (1.0 + e);
      } else {
        return -1.0 / (1.0 + std::exp(z));
      }
    case Kind::absolute:
      return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
  }
  return 0.0;
}

double Loss::tilde_second(double z) const {
  switch (kind_) {
    case Kind::squared:
      return 1.0;
    case Kind::logistic: {
      const double e = std::exp(-std::abs(z));
      return e / ((1.0 + e) * (1.0 + e));
    }
    case Kind::absolute:
      return 0.0;
  }
  return 0.0;
}

LossValue loss_eval(const Loss& loss, double y, double yhat) {
  if (!std::isfinite(y) || !std::isfinite(yhat)) {
    throw DomainError("loss_eval: non-finite input");
  }
  if (loss.form() == LossForm::classification) {
    const double s = sgn_label(y);
    const double z = s * yhat;
    return {loss.tilde(z), s * loss.tilde_deriv(z)};
  }
  const double z = y - yhat;
  return {loss.tilde(z), -loss.tilde_deriv(z)};
}

double loss_second(const Loss& loss, double y, double yhat) {
  if (loss.form() == LossForm::classification) return loss.tilde_second(sgn_label(y) * yhat);
  return loss.tilde_second(y - yhat);
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return out;
}

std::vector<double> default_z_grid() { return linspace(-30.0, 30.0, 2001); }

std::vector<std::pair<double, double>> default_yyhat_grid() {
  const auto axis = linspace(-10.0, 10.0, 201);
  std::vector<std::pair<double, double>> grid;
  grid.reserve(axis.size() * axis.size());
  for (double y : axis) {
    for (double yh : axis) grid.emplace_back(y, yh);
  }
  return grid;
}

namespace {

struct Worst {
  double value = -INFINITY;
  double a = 0.0;
  double b = 0.0;
  void offer(double v, double x, double y) {
    if (v > value) {
      value = v;
      a = x;
      b = y;
    }
  }
};

PropertyReport finish(std::string property, const Worst& w) {
  PropertyReport r;
  r.property = std::move(property);
  r.max_violation = w.value;
  r.at_first = w.a;
  r.at_second = w.b;
  r.passed = w.value <= kPropertyTolerance;
  return r;
}

}  // namespace

PropertyReport check_quadratic_bounded(const Loss& loss, QbConstants claimed,
                                       std::span<const std::pair<double, double>> grid) {
  Worst w;
  for (const auto& [y, yhat] : grid) {
    const double d = loss_eval(loss, y, yhat).deriv;
    w.offer(std::abs(d) - (claimed.c1 + claimed.c2 * (std::abs(y) + std::abs(yhat))), y, yhat);
  }
  return finish(fmt::format("{}: ({}, {})-quadratically-bounded", loss.name(), claimed.c1,
                            claimed.c2),
                w);
}

PropertyReport check_self_bounding(const Loss& loss, double rho, std::span<const double> z_grid) {
  Worst w;
  for (double z : z_grid) {
    const double d = loss.tilde_deriv(z);
    w.offer(d * d - 2.0 * rho * loss.tilde(z), z, 0.0);
  }
  return finish(fmt::format("{}: {}-self-bounding", loss.name(), rho), w);
}

PropertyReport check_lipschitz(const Loss& loss, double alpha, std::span<const double> z_grid) {
  Worst w;
  for (double z : z_grid) w.offer(std::abs(loss.tilde_deriv(z)) - alpha, z, 0.0);
  return finish(fmt::format("{}: {}-Lipschitz", loss.name(), alpha), w);
}

PropertyReport check_smooth(const Loss& loss, double beta, std::span<const double> z_grid) {
  Worst w;
  std::vector<double> d(z_grid.size());
  for (std::size_t i = 0; i < z_grid.size(); ++i) d[i] = loss.tilde_deriv(z_grid[i]);
  for (std::size_t i = 0; i < z_grid.size(); ++i) {
    for (std::size_t j = i + 1; j < z_grid.size(); ++j) {
      w.offer(std::abs(d[i] - d[j]) - beta * std::abs(z_grid[i] - z_grid[j]), z_grid[i],
              z_grid[j]);
    }
  }
  return finish(fmt::format("{}: {}-smooth", loss.name(), beta), w);
}

PropertyReport check_convex(const Loss& loss, std::span<const double> z_grid) {
  Worst w;
  std::vector<double> v(z_grid.size());
  for (std::size_t i = 0; i < z_grid.size(); ++i) v[i] = loss.tilde(z_grid[i]);
  for (std::size_t i = 0; i < z_grid.size(); ++i) {
    for (std::size_t j = i + 1; j < z_grid.size(); ++j) {
      const double mid = loss.tilde(0.5 * (z_grid[i] + z_grid[j]));
      w.offer(mid - 0.5 * (v[i] + v[j]), z_grid[i], z_grid[j]);
    }
  }
  return finish(fmt::format("{}: midpoint convex", loss.name()), w);
}

PropertyReport check_nonnegative(const Loss& loss, std::span<const double> z_grid) {
  Worst w;
  for (double z : z_grid) w.offer(-loss.tilde(z), z, 0.0);
  return finish(fmt::format("{}: nonnegative", loss.name()), w);
}

QbConstants qb_from_lip_or_smooth(std::optional<double> alpha, std::optional<double> beta,
                                  double deriv_at_zero) {
  if (!alpha && !beta) {
    throw DomainError("qb_from_lip_or_smooth: need a Lipschitz or a smoothness constant");
  }
  const std::optional<QbConstants> lip =
      alpha ? std::optional<QbConstants>(QbConstants{*alpha, 0.0}) : std::nullopt;
  const std::optional<QbConstants> smooth =
      beta ? std::optional<QbConstants>(QbConstants{std::abs(deriv_at_zero), *beta})
           : std::nullopt;
  if (lip && smooth) {
    return (smooth->c1 + smooth->c2 < lip->c1 + lip->c2) ? *smooth : *lip;
  }
  return lip ? *lip : *smooth;
}

}  // namespace mdlab
