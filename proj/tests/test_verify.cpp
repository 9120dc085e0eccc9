#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "mdlab/error.hpp"
#include "mdlab/verify.hpp"

using namespace mdlab;

namespace {

// Wilson score bounds are the roots of (p_hat - p)^2 = z^2 p (1 - p) / n.
std::pair<double, double> wilson_oracle(double k, double n, double z) {
  const double ph = k / n;
  const double a = 1.0 + z * z / n;
  const double b = -(2.0 * ph + z * z / n);
  const double c = ph * ph;
  const double disc = std::sqrt(b * b - 4.0 * a * c);
  return {(-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a)};
}

MdTrajectory md_run(std::uint64_t seed, double eta, int t) {
  SampleStream s(two_cluster_default(), Rng(seed, 0, StreamRole::samples));
  return run_stochastic_md(MirrorGeometry::euclidean(), Loss::logistic(), s, Vector::Zero(2), eta, t);
}

}  // namespace

TEST_CASE("deterministic md lemma holds on solver output") {
  const Vector w_ref{{0.0, 2.0}};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto tr = md_run(seed, 1.0, 400);
    const auto ref = losses_at_reference(Loss::logistic(), tr, w_ref);
    const auto rep = check_det_md(MirrorGeometry::euclidean(), tr, ref, w_ref);
    CHECK(rep.passed);
    CHECK(rep.violations == 0);
  }
}

TEST_CASE("zero step size leaves the divergence unchanged") {
  // the solvers reject eta = 0, so build the frozen trajectory by hand
  const auto moving = md_run(1, 1.0, 50);
  MdTrajectory tr;
  tr.eta = 0.0;
  for (auto st : moving.steps) {
    st.w = Vector::Zero(2);
    st.step_size = 0.0;
    tr.steps.push_back(st);
  }
  tr.final_w = Vector::Zero(2);
  const Vector w_ref{{1.0, 1.0}};
  const auto rep = check_det_md(MirrorGeometry::euclidean(), tr,
                                losses_at_reference(Loss::logistic(), tr, w_ref), w_ref);
  CHECK(rep.passed);
  CHECK(bregman_div(MirrorGeometry::euclidean(), w_ref, tr.final_w) ==
        bregman_div(MirrorGeometry::euclidean(), w_ref, tr.iterate(0)));
}

TEST_CASE("a perturbed iterate is caught") {
  auto tr = md_run(2, 1.0, 100);
  const Vector w_ref{{0.0, 2.0}};
  const auto ref = losses_at_reference(Loss::logistic(), tr, w_ref);
  tr.steps[40].w(0) += 0.1;
  const auto rep = check_det_md(MirrorGeometry::euclidean(), tr, ref, w_ref);
  CHECK_FALSE(rep.passed);
  REQUIRE(rep.first_violation_step.has_value());
  CHECK(*rep.first_violation_step == 40);
}

TEST_CASE("deterministic td lemma") {
  FiniteChain chain;
  chain.transition = Matrix{{0.9, 0.1}, {0.2, 0.8}};
  chain.features = {Vector{{1.0, 0.0}}, Vector{{0.0, 1.0}}};
  chain.reward = Vector{{1.0, 0.0}};
  const auto fp = td_fixed_point(chain, 0.5);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed, 0, StreamRole::samples);
    const auto tr = run_td(rng, chain, Vector::Zero(2), 0.5, 0.3, 500);
    CHECK(check_det_td(tr, fp.w_star).passed);
  }
  Rng rng(1, 0, StreamRole::samples);
  const auto still = run_td(rng, chain, fp.w_star, 0.5, 0.0, 20);
  const auto rep = check_det_td(still, fp.w_star);
  CHECK(rep.passed);
  CHECK((still.final_w - fp.w_star).squaredNorm() == 0.0);

  Rng rng2(2, 0, StreamRole::samples);
  auto bad = run_td(rng2, chain, Vector::Zero(2), 0.5, 0.3, 100);
  bad.records[30].w(1) += 0.1;
  CHECK_FALSE(check_det_td(bad, fp.w_star).passed);
}

TEST_CASE("mirror flow identity on a quadratic") {
  const std::vector<LabeledSample> data{{Vector{{0.8, 0.0}}, 0.8}, {Vector{{0.0, 0.4}}, -0.4}};
  const auto g = MirrorGeometry::euclidean();
  const Vector w_ref{{0.5, 0.5}};
  const auto flow = integrate_mirror_flow(g, Loss::squared(), data, Vector::Zero(2), 2.0, 1e-3);
  const auto rep = check_mf_identity(g, flow, w_ref, Loss::squared(), data);
  CHECK(rep.check.passed);
  CHECK(rep.max_residual <= 1e-8);
  // closed form: w_k(s) = y_k / x_k (1 - exp(-x_k^2 s / 2))
  const Vector end = flow.records.back().w;
  CHECK(end(0) == doctest::Approx(1.0 - std::exp(-0.64)).epsilon(1e-10));
  CHECK(end(1) == doctest::Approx(-(1.0 - std::exp(-0.16))).epsilon(1e-10));

  const auto still = integrate_mirror_flow(g, Loss::squared(), data, Vector{{1.0, -1.0}}, 1.0, 1e-2);
  const auto srep = check_mf_identity(g, still, w_ref, Loss::squared(), data);
  CHECK(srep.check.passed);
  CHECK(srep.max_residual <= 1e-14);
}

TEST_CASE("risk estimation") {
  const auto dist = two_cluster_default();
  const Vector w{{0.3, 1.2}};
  double exact = 0.0;
  for (std::size_t k = 0; k < dist.points.size(); ++k) {
    exact += dist.probs[k] * std::log1p(std::exp(-dist.labels[k] * dist.points[k].dot(w)));
  }
  const auto e = estimate_risk(Loss::logistic(), dist, w, RiskMode::exact());
  CHECK(e.value == doctest::Approx(exact).epsilon(1e-14));
  CHECK(e.stderr_ == 0.0);
  const auto mc = estimate_risk(Loss::logistic(), dist, w, RiskMode::monte_carlo(100000, 3));
  CHECK(std::abs(mc.value - exact) <= 4 * mc.stderr_);

  const auto sphere = estimate_risk(Loss::logistic(), SphereSource{2}, Vector{{3.0, 0.0}}, RiskMode::exact());
  CHECK(sphere.value == doctest::Approx(sphere_risk_exact(3.0)).epsilon(1e-8));
  const auto smc = estimate_risk(Loss::logistic(), SphereSource{3}, Vector{{3.0, 0.0, 0.0}},
                                 RiskMode::monte_carlo(100000, 5));
  CHECK(std::abs(smc.value - sphere_risk_exact(3.0)) <= 4 * smc.stderr_);
}

TEST_CASE("wilson interval") {
  for (auto [k, n] : std::vector<std::pair<long, long>>{{5, 200}, {1, 10}, {50, 100}, {99, 100}}) {
    const auto w = wilson_interval(k, n);
    const auto o = wilson_oracle(double(k), double(n), 1.959963984540054);
    CHECK(w.lo == doctest::Approx(o.first).epsilon(1e-12));
    CHECK(w.hi == doctest::Approx(o.second).epsilon(1e-12));
  }
  const auto w = wilson_interval(5, 200);
  CHECK(w.lo == doctest::Approx(0.0107).epsilon(2e-3));
  CHECK(w.hi == doctest::Approx(0.0572).epsilon(2e-3));
  CHECK(wilson_interval(0, 50).lo == 0.0);
  CHECK(wilson_interval(50, 50).hi == 1.0);
  CHECK_THROWS_AS(wilson_interval(3, 2), DomainError);
}

TEST_CASE("violation statistics") {
  CHECK(count_stats(0, 200, 0.05).passed);
  CHECK_FALSE(count_stats(200, 200, 0.05).passed);
  const auto s = count_stats(5, 200, 0.05);
  CHECK(s.passed);
  CHECK(s.fraction == doctest::Approx(0.025));

  std::vector<TrialSummary> trials(40);
  double prev = -1.0;
  for (int k = 0; k <= 40; ++k) {
    if (k > 0) trials[k - 1].any_violation = true;
    const auto v = violation_stats(trials, 0.05);
    CHECK(v.fraction >= prev);
    CHECK(v.violations == k);
    prev = v.fraction;
  }
}

TEST_CASE("trial summaries follow their ledger") {
  std::vector<LedgerEntry> ledger{{1, 1.0, 2.0, 1.0, false}, {2, 3.0, 2.0, -1.0, true}, {3, 3.0, 2.0, -1.0, true}};
  const auto s = summarize_trial(4, ledger, true, 0.5, 0.1);
  CHECK(s.any_violation);
  CHECK(*s.first_violation_step == 2);
  CHECK(s.any_decoupling);
  ledger.resize(1);
  CHECK_FALSE(summarize_trial(4, ledger, false, 0, 0).any_violation);
}

TEST_CASE("hexbin") {
  const double r = 0.1;
  const std::vector<Vector> one{Vector{{0.15, std::sqrt(3.0) * 0.05}}};  // center (q, r) = (1, 0)
  auto cells = hexbin_aggregate(one, r, {-1, 1, -1, 1});
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].cx == doctest::Approx(0.15));
  CHECK(cells[0].count == 1);

  // midpoint between (0, 0) and (0.15, sqrt(3) 0.05)
  const std::vector<Vector> tie{Vector{{0.075, std::sqrt(3.0) * 0.025}}};
  cells = hexbin_aggregate(tie, r, {-1, 1, -1, 1});
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].cx == 0.0);
  CHECK(cells[0].cy == 0.0);

  const std::vector<Vector> out{Vector{{5.0, 5.0}}};
  CHECK(hexbin_aggregate(out, r, {-1, 1, -1, 1}).empty());
}

TEST_CASE("hexbin assigns to the nearest center and conserves counts") {
  const double rad = 0.07;
  Rng rng(12, 0, StreamRole::test);
  std::vector<Vector> pts;
  for (int i = 0; i < 2000; ++i) pts.push_back(Vector{{2 * rng.uniform() - 1, 2 * rng.uniform() - 1}});
  const auto cells = hexbin_aggregate(pts, rad, {-1, 1, -1, 1});
  long total = 0;
  for (const auto& c : cells) total += c.count;
  CHECK(total == 2000);
  // brute-force nearest lattice center
  std::map<std::pair<double, double>, long> oracle;
  for (const auto& p : pts) {
    double best = INFINITY;
    std::pair<double, double> bc;
    for (int q = -20; q <= 20; ++q)
      for (int rr = -30; rr <= 30; ++rr) {
        const double cx = 1.5 * rad * q, cy = std::sqrt(3.0) * rad * (rr + 0.5 * q);
        const double d = (p(0) - cx) * (p(0) - cx) + (p(1) - cy) * (p(1) - cy);
        if (d < best) {
          best = d;
          bc = {cx, cy};
        }
      }
    ++oracle[bc];
  }
  REQUIRE(oracle.size() == cells.size());
  for (const auto& c : cells) {
    const auto it = oracle.find({c.cx, c.cy});
    REQUIRE(it != oracle.end());
    CHECK(it->second == c.count);
  }
}

TEST_CASE("ledger csv layout") {
  std::vector<LedgerEntry> ledger{{1, 0.5, 1.0, 0.5, false}};
  std::ostringstream os;
  write_ledger_csv(os, ledger, 3, true);
  const auto s = os.str();
  CHECK(s.find("trial") == 0);
  CHECK(s.find("\n3,1,") != std::string::npos);
}

TEST_CASE("cumulative simpson is exact for cubics") {
  const double h = 0.1;
  std::vector<double> f;
  for (int k = 0; k <= 11; ++k) {
    const double x = k * h;
    f.push_back(x * x * x - 2 * x + 1);
  }
  const auto c = cumulative_simpson(f, h);
  for (int k = 2; k <= 11; ++k) {
    const double x = k * h;
    CHECK(c[k] == doctest::Approx(x * x * x * x / 4 - x * x + x).epsilon(1e-12));
  }
}
