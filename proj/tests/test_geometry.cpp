#include <doctest.h>

#include <cmath>
#include <random>

#include "mdlab/error.hpp"
#include "mdlab/geometry.hpp"

using namespace mdlab;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

Vector random_vec(std::mt19937_64& gen, int d, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = n(gen);
  return v;
}

double lp_norm(const Vector& v, double p) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(v(i)), p);
  return std::pow(s, 1.0 / p);
}

}  // namespace

TEST_CASE("euclidean bregman divergence is half the squared distance") {
  const auto g = MirrorGeometry::euclidean();
  CHECK(bregman_div(g, vec({1, 0}), vec({0, 0})) == doctest::Approx(0.5));
  CHECK(bregman_div(g, vec({3, -1}), vec({3, -1})) == 0.0);
}

TEST_CASE("p-norm divergence against a direct evaluation") {
  // psi(w) = |w|_p^2 / (2 (p - 1)); grad psi(v)_i = |v|_p^{2-p} sign(v_i) |v_i|^{p-1} / (p - 1).
  const double p = 1.5;
  const auto g = MirrorGeometry::p_norm(p, 1.0);
  std::mt19937_64 gen(3);
  for (int k = 0; k < 50; ++k) {
    const Vector w = random_vec(gen, 3, 1.0), v = random_vec(gen, 3, 1.0);
    const double nv = lp_norm(v, p);
    Vector gv(3);
    for (int i = 0; i < 3; ++i)
      gv(i) = std::pow(nv, 2.0 - p) * std::copysign(std::pow(std::abs(v(i)), p - 1.0), v(i));
    gv /= p - 1.0;
    const double direct =
        (0.5 * lp_norm(w, p) * lp_norm(w, p) - 0.5 * nv * nv) / (p - 1.0) - gv.dot(w - v);
    CHECK(bregman_div(g, w, v) == doctest::Approx(direct).epsilon(1e-10));
    CHECK(bregman_div(g, w, v) >= 0.5 * std::pow(lp_norm(w - v, p), 2) - 1e-10);
  }
  CHECK(bregman_div(g, vec({0.3, -2, 1}), vec({0.3, -2, 1})) == doctest::Approx(0.0));
}

TEST_CASE("strong convexity and legendre roundtrip on random pairs") {
  std::mt19937_64 gen(11);
  for (const auto& g : {MirrorGeometry::euclidean(), MirrorGeometry::p_norm(1.5, 1.0),
                        MirrorGeometry::p_norm(1.2, 1.0), MirrorGeometry::p_norm(2.0, 1.0)}) {
    CAPTURE(g.name());
    for (int k = 0; k < 1000; ++k) {
      const int d = 1 + k % 5;
      const Vector w = random_vec(gen, d, 2.0), v = random_vec(gen, d, 2.0);
      const double n = g.primal_norm(w - v);
      REQUIRE(bregman_div(g, w, v) >= 0.5 * n * n - 1e-10);
      const Vector back = g.grad_psi_star(g.grad_psi(w));
      REQUIRE((back - w).norm() <= 1e-10 * (1.0 + w.norm()));
    }
  }
}

TEST_CASE("p-norm dual norm is the conjugate exponent norm") {
  const auto g = MirrorGeometry::p_norm(1.5, 1.0);
  CHECK(g.q() == doctest::Approx(3.0));
  const Vector v = vec({1, -2, 0.5});
  CHECK(g.dual_norm(v) == doctest::Approx(lp_norm(v, 3.0)));
  CHECK(g.primal_norm(v) == doctest::Approx(lp_norm(v, 1.5)));
}

TEST_CASE("invalid geometry arguments") {
  CHECK_THROWS_AS(MirrorGeometry::p_norm(1.0, 1.0), DomainError);
  CHECK_THROWS_AS(MirrorGeometry::p_norm(2.5, 1.0), DomainError);
  const auto g = MirrorGeometry::euclidean();
  CHECK_THROWS_AS(bregman_div(g, vec({1, 2}), vec({1})), DomainError);
  CHECK_THROWS_AS(bregman_div(g, vec({NAN, 2}), vec({1, 1})), DomainError);
}

TEST_CASE("ball projection") {
  CHECK(project_ball(vec({0, 0}), 1.0, vec({0.5, 0})) == vec({0.5, 0}));
  CHECK(project_ball(vec({0, 0}), 1.0, vec({2, 0})).isApprox(vec({1, 0})));
  const Vector p = project_ball(vec({1, 0}), 2.0, vec({4, 4}));
  CHECK(p(0) == doctest::Approx(2.2));
  CHECK(p(1) == doctest::Approx(1.6));
  CHECK((p - vec({1, 0})).norm() == doctest::Approx(2.0));
  CHECK_FALSE(outside_ball(vec({0, 0}), 1.0, vec({0.6, 0.8})));
  CHECK(outside_ball(vec({0, 0}), 1.0, vec({0.6, 0.81})));
}

TEST_CASE("projection is idempotent and 1-Lipschitz") {
  std::mt19937_64 gen(5);
  for (int k = 0; k < 500; ++k) {
    const Vector c = random_vec(gen, 3, 1.0);
    const double r = 0.1 + 0.01 * (k % 50);
    const Vector a = random_vec(gen, 3, 3.0), b = random_vec(gen, 3, 3.0);
    const Vector pa = project_ball(c, r, a), pb = project_ball(c, r, b);
    REQUIRE(project_ball(c, r, pa) == pa);
    REQUIRE((pa - pb).norm() <= (a - b).norm() + 1e-12);
  }
}
