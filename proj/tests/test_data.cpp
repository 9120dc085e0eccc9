#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mdlab/data.hpp"
#include "mdlab/error.hpp"

using namespace mdlab;

namespace {

// Composite Simpson on [0, r] of ln(1 + e^{-s}), divided by r.
double sphere_oracle(double r) {
  const int n = 20000;
  const double h = r / n;
  auto f = [](double s) { return std::log1p(std::exp(-s)); };
  double acc = f(0.0) + f(r);
  for (int k = 1; k < n; ++k) acc += (k % 2 ? 4.0 : 2.0) * f(k * h);
  return acc * h / 3.0 / r;
}

Matrix two_state() { return Matrix{{0.9, 0.1}, {0.2, 0.8}}; }

}  // namespace

TEST_CASE("two-cluster sampler frequencies") {
  const auto dist = two_cluster_default();
  Rng rng(7, 0, StreamRole::test);
  int likely = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto s = sample_two_cluster(rng, dist);
    REQUIRE(std::max(s.x.norm(), std::abs(s.y)) <= 1.0 + 1e-12);
    if (s.x(1) > 0) ++likely;
  }
  CHECK(std::abs(likely / double(n) - 0.9) <= 0.01);
}

TEST_CASE("degenerate and reproducible discrete sources") {
  DiscreteDistribution one;
  one.points = {Vector{{0.6, 0.8}}};
  one.labels = {-1.0};
  one.probs = {1.0};
  Rng rng(1, 0, StreamRole::test);
  for (int i = 0; i < 20; ++i) {
    const auto s = sample_discrete(rng, one);
    CHECK(s.x == one.points[0]);
    CHECK(s.y == -1.0);
  }
  const auto dist = two_cluster_default();
  Rng a(7, 0, StreamRole::samples), b(7, 0, StreamRole::samples);
  for (int i = 0; i < 500; ++i) {
    const auto sa = sample_two_cluster(a, dist), sb = sample_two_cluster(b, dist);
    REQUIRE(sa.x == sb.x);
    REQUIRE(sa.y == sb.y);
  }
}

TEST_CASE("bounded support is enforced") {
  DiscreteDistribution bad;
  bad.points = {Vector{{2.0, 0.0}}};
  bad.labels = {1.0};
  bad.probs = {1.0};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad.bounded = false;
  CHECK_NOTHROW(bad.validate());
  DiscreteDistribution neg = two_cluster_default();
  neg.probs = {0.5, 0.6, -0.1, 0.0};
  CHECK_THROWS_AS(neg.validate(), DomainError);
}

TEST_CASE("sphere slice sampler") {
  CHECK_THROWS_AS([] { Rng r(1, 0, StreamRole::test); sample_sphere_slice(r, 1); }(), DomainError);
  for (int d : {2, 3, 5}) {
    Rng rng(3, 0, StreamRole::test);
    int in_slice = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const auto s = sample_sphere_slice(rng, d);
      REQUIRE(std::abs(s.x.norm() - 1.0) <= 1e-12);
      REQUIRE(s.y * (s.x(0) >= 0 ? 1.0 : -1.0) == 1.0);
      if (s.x(0) >= 0.0 && s.x(0) <= 0.5) ++in_slice;
    }
    CHECK(std::abs(in_slice / double(n) - 0.25) <= 0.01);
  }
}

TEST_CASE("sphere risk against a simpson oracle") {
  CHECK(sphere_risk_exact(1.0) == doctest::Approx(sphere_oracle(1.0)).epsilon(1e-9));
  CHECK(sphere_risk_exact(1.0) == doctest::Approx(0.4837).epsilon(1e-4));
  CHECK(sphere_risk_exact(5.0) == doctest::Approx(sphere_oracle(5.0)).epsilon(1e-9));
  CHECK(sphere_risk_exact(5.0) == doctest::Approx(0.163146).epsilon(1e-5));
  for (double r : {0.3, 2.0, 10.0, 20.0}) {
    CHECK(sphere_risk_quadrature(r) == doctest::Approx(sphere_oracle(r)).epsilon(1e-9));
    CHECK(std::abs(sphere_risk_series(r) - sphere_risk_quadrature(r)) <= 1e-8);
  }
  for (double r : {1.0, 2.0, 5.0, 10.0, 20.0}) {
    CHECK(std::abs(sphere_risk_exact(r) - std::numbers::pi * std::numbers::pi / (12 * r)) <=
          2 * std::exp(-r));
  }
  double prev = INFINITY;
  for (int r = 1; r <= 20; ++r) {
    const double v = sphere_risk_exact(r);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("stationary law and mixing witness of a two-state chain") {
  const Matrix p = two_state();
  const Vector pi = stationary_distribution(p);
  CHECK(pi(0) == doctest::Approx(2.0 / 3.0));
  CHECK(pi(1) == doctest::Approx(1.0 / 3.0));
  // second eigenvalue 0.7: worst-start TV after n steps is (2/3) 0.7^n
  const double eps = 0.01;
  int tau = 1;
  while ((2.0 / 3.0) * std::pow(0.7, tau) > eps) ++tau;
  const auto w = chain_witness(p, eps);
  CHECK(w.tau == tau);
  CHECK(w.tau == 12);
  CHECK(w.eps == eps);
}

TEST_CASE("already-stationary chains mix in one step") {
  const Matrix iid{{0.25, 0.75}, {0.25, 0.75}};
  for (double eps : {0.0, 0.01, 0.5}) {
    const auto w = chain_witness(iid, eps);
    CHECK(w.tau == 1);
    CHECK(w.pi(0) == doctest::Approx(0.25));
  }
}

TEST_CASE("witness holds for random start distributions") {
  const Matrix p{{0.5, 0.3, 0.2}, {0.1, 0.6, 0.3}, {0.3, 0.3, 0.4}};
  const auto w = chain_witness(p, 1e-3);
  Matrix pt = Matrix::Identity(3, 3);
  for (int i = 0; i < w.tau; ++i) pt = pt * p;
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    Vector s(3);
    for (int i = 0; i < 3; ++i) s(i) = u(gen);
    s /= s.sum();
    const Vector after = (s.transpose() * pt).transpose();
    CHECK(total_variation(after, w.pi) <= 1e-3 + 1e-12);
  }
}

TEST_CASE("heavy-tail samples") {
  HeavyTailSpec spec;
  spec.sigma = 1.0;
  Rng rng(4, 0, StreamRole::test);
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto h = sample_heavy(rng, spec, 2);
    REQUIRE(h.z >= 1.0);
    REQUIRE(h.sample.x.norm() <= std::pow(h.z, 0.25) * (1 + 1e-12));
    REQUIRE(std::abs(h.sample.y) <= std::pow(h.z, 0.25) * (1 + 1e-12));
    s += h.z;
    s2 += h.z * h.z;
  }
  // Z = 1 + sigma |N(0,1)|: mean 1 + sigma sqrt(2/pi), variance sigma^2 (1 - 2/pi)
  const double mean = 1.0 + std::sqrt(2.0 / std::numbers::pi);
  const double se = std::sqrt((s2 / n - (s / n) * (s / n)) / n);
  CHECK(std::abs(s / n - mean) <= 3 * se);
  CHECK(heavy_moments(spec).mean_z == doctest::Approx(mean));

  HeavyTailSpec point;
  point.sigma = 0.0;
  Rng r2(4, 1, StreamRole::test);
  for (int i = 0; i < 100; ++i) CHECK(sample_heavy(r2, point, 3).z == 1.0);

  HeavyTailSpec poly;
  poly.kind = HeavyTailSpec::Kind::polynomial;
  poly.p = 8;
  poly.m = 10.0;
  for (int r = 2; r <= 8; r += 2) CHECK(heavy_central_moment(poly, r) <= 10.0 * (1 + 1e-12));
  poly.p = 6;
  CHECK_THROWS_AS(poly.validate(), DomainError);
}

TEST_CASE("td stream") {
  FiniteChain chain;
  chain.transition = two_state();
  chain.features = {Vector{{1.0, 0.0}}, Vector{{0.0, 1.0}}};
  chain.reward = Vector{{1.0, 0.0}};
  Rng a(7, 0, StreamRole::samples), b(7, 0, StreamRole::samples);
  const auto ta = td_stream(a, chain, 3), tb = td_stream(b, chain, 3);
  REQUIRE(ta.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(ta[i].x == tb[i].x);
    CHECK(ta[i].x_next == tb[i].x_next);
    CHECK(ta[i].r == tb[i].r);
  }
  CHECK(ta[1].x == ta[0].x_next);
  CHECK(ta[2].x == ta[1].x_next);

  FiniteChain absorbing;
  absorbing.transition = Matrix::Ones(1, 1);
  absorbing.features = {Vector{{0.5, 0.5}}};
  absorbing.reward = Vector::Ones(1);
  Rng c(1, 0, StreamRole::samples);
  for (const auto& z : td_stream(c, absorbing, 10)) {
    CHECK(z.x == absorbing.features[0]);
    CHECK(z.x_next == absorbing.features[0]);
    CHECK(z.r == 1.0);
  }
}

TEST_CASE("bad chains are rejected") {
  FiniteChain chain;
  chain.transition = Matrix{{0.9, 0.2}, {0.2, 0.8}};
  chain.features = {Vector{{1.0, 0.0}}, Vector{{0.0, 1.0}}};
  chain.reward = Vector{{1.0, 0.0}};
  CHECK_THROWS_AS(chain.validate(), DomainError);
}
