#include <doctest.h>

#include <cmath>
#include <vector>

#include "mdlab/losses.hpp"

using namespace mdlab;

TEST_CASE("loss values and derivatives at known points") {
  auto l = loss_eval(Loss::logistic(), 1.0, 0.0);
  CHECK(l.value == doctest::Approx(std::log(2.0)));
  CHECK(l.deriv == doctest::Approx(-0.5));
  l = loss_eval(Loss::logistic(), -1.0, 0.0);
  CHECK(l.deriv == doctest::Approx(0.5));
  l = loss_eval(Loss::squared(), 1.0, 0.0);
  CHECK(l.value == doctest::Approx(0.5));
  CHECK(l.deriv == doctest::Approx(-1.0));
  l = loss_eval(Loss::absolute(), 2.0, 2.0);
  CHECK(l.value == 0.0);
  CHECK(l.deriv == 0.0);
  l = loss_eval(Loss::absolute(), 2.0, 3.5);
  CHECK(l.value == doctest::Approx(1.5));
  CHECK(l.deriv == doctest::Approx(1.0));
}

TEST_CASE("logistic is stable far in the tails") {
  const auto lg = Loss::logistic();
  CHECK(lg.tilde(800.0) >= 0.0);
  CHECK(std::isfinite(lg.tilde(-800.0)));
  CHECK(lg.tilde(-800.0) == doctest::Approx(800.0));
  CHECK(lg.tilde_deriv(-800.0) == doctest::Approx(-1.0));
}

TEST_CASE("shipped constants pass their property checks") {
  const auto grid = default_yyhat_grid();
  const auto z = default_z_grid();
  const auto sq = Loss::squared(), lg = Loss::logistic(), ab = Loss::absolute();
  CHECK(check_quadratic_bounded(sq, {0, 1}, grid).passed);
  CHECK(check_self_bounding(sq, 1.0, z).passed);
  CHECK(check_quadratic_bounded(lg, {1, 0}, grid).passed);
  CHECK(check_self_bounding(lg, 0.5, z).passed);
  CHECK(check_lipschitz(lg, 1.0, z).passed);
  CHECK(check_smooth(lg, 0.25, z).passed);
  CHECK(check_quadratic_bounded(ab, {1, 0}, grid).passed);
  CHECK(check_lipschitz(ab, 1.0, z).passed);
  for (const auto& l : {sq, lg, ab}) {
    CHECK(check_convex(l, z).passed);
    CHECK(check_nonnegative(l, z).passed);
  }
}

TEST_CASE("squared self-bounding holds with equality") {
  const auto sq = Loss::squared();
  for (double z : linspace(-10, 10, 201)) {
    const double d = sq.tilde_deriv(z);
    CHECK(d * d == doctest::Approx(2.0 * 1.0 * sq.tilde(z)));
  }
}

TEST_CASE("wrong claims are rejected") {
  const auto qb = check_quadratic_bounded(Loss::squared(), {0, 0.5}, default_yyhat_grid());
  CHECK_FALSE(qb.passed);
  CHECK(qb.max_violation > 0.0);
  std::vector<std::pair<double, double>> single{{1.0, 0.0}};
  CHECK_FALSE(check_quadratic_bounded(Loss::squared(), {0, 0.5}, single).passed);

  const auto sb = check_self_bounding(Loss::logistic(), 0.1, default_z_grid());
  CHECK_FALSE(sb.passed);
  // at z = 0: l'(0)^2 = 0.25 against 2 * 0.1 * ln 2
  std::vector<double> zero{0.0};
  const auto at0 = check_self_bounding(Loss::logistic(), 0.1, zero);
  CHECK(at0.max_violation == doctest::Approx(0.25 - 0.2 * std::log(2.0)));
  CHECK_FALSE(check_lipschitz(Loss::squared(), 1.0, default_z_grid()).passed);
  CHECK_FALSE(check_smooth(Loss::logistic(), 0.2, default_z_grid()).passed);
}

TEST_CASE("quadratic-bound constants derived from Lipschitz or smoothness") {
  auto c = qb_from_lip_or_smooth(1.0, std::nullopt, -0.5);
  CHECK(c.c1 == 1.0);
  CHECK(c.c2 == 0.0);
  c = qb_from_lip_or_smooth(std::nullopt, 1.0, 0.0);
  CHECK(c.c1 == 0.0);
  CHECK(c.c2 == 1.0);
  // derived constants must themselves pass the check
  for (const auto& l : {Loss::squared(), Loss::logistic(), Loss::absolute()}) {
    const auto d = qb_from_lip_or_smooth(l.lipschitz_alpha(), l.smooth_beta(), l.tilde_deriv(0.0));
    CHECK(check_quadratic_bounded(l, d, default_yyhat_grid()).passed);
  }
}

TEST_CASE("central differences match the analytic derivative") {
  const double h = 1e-6;
  for (const auto& l : {Loss::squared(), Loss::logistic(), Loss::absolute()}) {
    for (double z : linspace(-20, 20, 161)) {
      if (l.kind() == Loss::Kind::absolute && std::abs(z) < 2 * h) continue;
      const double fd = (l.tilde(z + h) - l.tilde(z - h)) / (2 * h);
      CHECK(std::abs(l.tilde_deriv(z) - fd) <= 10 * h);
    }
  }
}

TEST_CASE("midpoint convexity on grid pairs") {
  const auto z = linspace(-15, 15, 61);
  for (const auto& l : {Loss::squared(), Loss::logistic(), Loss::absolute()}) {
    for (double a : z)
      for (double b : z)
        REQUIRE(l.tilde(0.5 * (a + b)) <= 0.5 * (l.tilde(a) + l.tilde(b)) + 1e-12);
  }
}
