#include <doctest.h>

#include <cmath>

#include "mdlab/bounds.hpp"
#include "mdlab/error.hpp"

using namespace mdlab;

namespace {

void require_decreasing(const BoundReport& r, int t) {
  double prev = r.rhs_at(1.0);
  REQUIRE(prev > 0.0);
  for (int i = 2; i <= t; ++i) {
    const double v = r.rhs_at(i);
    REQUIRE(v > 0.0);
    REQUIRE(v <= prev);
    prev = v;
  }
}

}  // namespace

TEST_CASE("realizable bound constants") {
  RealizableInputs in;
  in.c1 = 1;
  in.c2 = 0;
  in.rho = 1;
  in.c4 = 1;
  in.d0 = 2;
  in.norm_wref = 1;
  in.r_wref = 0.1;
  in.eta = 0.5;
  in.delta = 0.01;
  in.t = 400;
  auto r = realizable_bound(in);
  CHECK(r.b_w == doctest::Approx(std::sqrt(64.0 * std::log(100.0))));
  CHECK(r.b_w == doctest::Approx(17.168).epsilon(1e-4));
  CHECK(r.failure_budget == 1.0);  // 2 t delta = 8, clamped
  in.c4 = 0;
  r = realizable_bound(in);
  CHECK(r.b_w == doctest::Approx(4.0 * std::sqrt(2.0)));
  // logistic separable: rho = 1/2 allows eta = 1 exactly
  in.rho = 0.5;
  in.eta = 1.0;
  r = realizable_bound(in);
  CHECK(r.eta_ceiling == 1.0);
  in.eta = 1.0 + 1e-9;
  CHECK_THROWS_AS(realizable_bound(in), DomainError);
}

TEST_CASE("general bound constants") {
  GeneralInputs in;
  in.c1 = 1;
  in.c2 = 0;
  in.d0 = 2;
  in.norm_wref = 100;
  in.tau = 3;
  in.delta = 0.001;
  in.t = 1e4;
  auto r = general_bound(in);
  CHECK(r.b_w == doctest::Approx(4.0 * std::sqrt(2.0)));
  CHECK(r.eta_ceiling == doctest::Approx(1.0 / (4096.0 * std::sqrt(3e4 * std::log(1000.0)))));
  CHECK(r.eta_ceiling == doctest::Approx(5.363e-7).epsilon(1e-3));
  CHECK(r.failure_budget == doctest::Approx(1.0));
  in.tau = 1;
  in.c1 = 2;
  in.c2 = 0.5;
  r = general_bound(in);
  CHECK(r.eta_ceiling == doctest::Approx(1.0 / (4096.0 * 2.0 * std::sqrt(1e4 * std::log(1000.0)))));
  in.tau = 0.5;
  CHECK_THROWS_AS(general_bound(in), DomainError);
}

TEST_CASE("td bound constants") {
  TdInputs in;
  in.norm_wref = 10;
  in.norm_w0_wref = 10;
  in.residual_norm = 0;
  in.tau = 5;
  in.delta = 0.001;
  in.t = 1e4;
  const auto r = td_bound(in);
  CHECK(r.b_w == 40.0);
  CHECK(r.rhs_at(17.0) == doctest::Approx(1600.0));
  CHECK(r.eta_ceiling == doctest::Approx(1.0 / (1024.0 * std::sqrt(5e4 * std::log(1000.0)))));
  CHECK(r.eta_ceiling == doctest::Approx(1.6617e-6).epsilon(1e-3));
}

TEST_CASE("heavy-tail constant by hand") {
  HeavyTailSpec sg;
  sg.sigma = 2;
  CHECK(std::abs(heavy_constant(sg, 3.0, 0.01, 1e4) - (3.0 + 2.0 * 2.0 * std::sqrt(std::log(100.0) / 1e4))) <= 1e-12);
  CHECK(heavy_constant(sg, 3.0, 0.01, 1e4) == doctest::Approx(3.08584).epsilon(1e-5));
  HeavyTailSpec poly;
  poly.kind = HeavyTailSpec::Kind::polynomial;
  poly.p = 8;
  poly.m = 10;
  CHECK(std::abs(heavy_constant(poly, 3.0, 0.01, 1e4) - (3.0 + 2.0 * 10.0 * std::pow(200.0, 0.125) / 100.0)) <= 1e-12);
  CHECK(heavy_constant(poly, 3.0, 0.01, 1e4) == doctest::Approx(3.38786).epsilon(1e-5));
  HeavyTailSpec bounded;
  bounded.sigma = 0;
  CHECK(heavy_constant(bounded, 1.0, 0.01, 1e4) == 1.0);
}

TEST_CASE("general and bounded heavy ceilings differ by sqrt(1 + C)") {
  GeneralInputs g;
  g.c1 = 1;
  g.d0 = 1;
  g.tau = 1;
  g.delta = 1e-4;
  g.t = 1000;
  HeavyInputs h;
  h.c1 = 1;
  h.d0 = 1;
  h.tail.sigma = 0;
  h.ez = 1;
  h.delta = 1e-4;
  h.t = 1000;
  const auto rg = general_bound(g);
  const auto rh = heavy_bound(h);
  CHECK(rh.eta_ceiling * std::sqrt(2.0) == doctest::Approx(rg.eta_ceiling).epsilon(1e-14));
  CHECK(rh.b_w == rg.b_w);
}

TEST_CASE("batch bound constants") {
  BatchInputs in;
  in.c1 = 1;
  in.c2 = 0;
  in.d0 = 4;
  in.norm_wref = 7;
  in.c6 = 1;
  in.delta = 0.01;
  in.t = 100;
  in.n = 400;
  const auto b = batch_bound(in);
  CHECK(b.flow.eta_ceiling == doctest::Approx(20.0 / (16.0 * (1.0 + 6.0 * std::sqrt(std::log(100.0))))));
  CHECK(b.flow.b_w == doctest::Approx(8.0));
  CHECK(b.discrete.failure_budget == doctest::Approx(0.04));
  CHECK(b.discrete.eta_ceiling == doctest::Approx(1.0 / (4096.0 * std::sqrt(100.0 * (1.0 + 6.0 * std::log(100.0))))));
}

TEST_CASE("concentration calculators") {
  CHECK(freedman_rhs(4, 1, 10, 0.1) == doctest::Approx(2.5 + 4.0 * std::log(10.0)));
  CHECK(freedman_rhs(4, 1, 10, 0.1) == doctest::Approx(11.710).epsilon(1e-4));
  CHECK(markov_conc_rhs(3.0, 1, 0, 50, 0.2, 0) == 2.0 * 3.0 * std::sqrt(50.0 * std::log(5.0)));
  CHECK(poly_tail_rhs(1, 8, 100, 2) == doctest::Approx(20.0));
  CHECK_THROWS_AS(freedman_rhs(3, 1, 1, 0.1), DomainError);
  CHECK_THROWS_AS(markov_conc_rhs(1, 0.5, 0, 10, 0.1, 0), DomainError);
}

TEST_CASE("every rhs is positive and decreasing in i") {
  RealizableInputs ri{.c1 = 1, .c2 = 0, .rho = 0.5, .c4 = 0.3, .d0 = 1, .norm_wref = 2,
                      .r_wref = 0.05, .eta = 1, .delta = 1e-3, .t = 500};
  require_decreasing(realizable_bound(ri), 500);
  GeneralInputs gi;
  gi.c1 = 1;
  gi.d0 = 1;
  gi.r_wref = 0.2;
  gi.delta = 1e-3;
  gi.t = 500;
  require_decreasing(general_bound(gi), 500);
  HeavyInputs hi;
  hi.c2 = 1;
  hi.d0 = 0.5;
  hi.norm_wref = 2;
  hi.delta = 1e-3;
  hi.t = 500;
  require_decreasing(heavy_bound(hi), 500);
  BatchInputs bi;
  bi.c1 = 1;
  bi.d0 = 1;
  bi.delta = 1e-3;
  bi.t = 500;
  bi.n = 50;
  const auto bb = batch_bound(bi);
  require_decreasing(bb.discrete, 500);
  require_decreasing(bb.flow, 500);
}

TEST_CASE("calculators are pure") {
  GeneralInputs gi;
  gi.c1 = 1.3;
  gi.c2 = 0.7;
  gi.d0 = 1.1;
  gi.norm_wref = 3;
  gi.r_wref = 0.2;
  gi.tau = 7;
  gi.delta = 1e-5;
  gi.t = 777;
  const auto a = general_bound(gi), b = general_bound(gi);
  CHECK(a.eta_ceiling == b.eta_ceiling);
  CHECK(a.b_w == b.b_w);
  CHECK(a.rhs_at(13) == b.rhs_at(13));
  CHECK(freedman_rhs(5, 2, 3, 0.01) == freedman_rhs(5, 2, 3, 0.01));
}
