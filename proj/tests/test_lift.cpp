#include <doctest.h>

#include <cmath>

#include "mfc/benchmarks.hpp"
#include "mfc/lift.hpp"
#include "mfc/rng.hpp"

using namespace mfc;

namespace {

DiscreteMeasure two_atoms(double a, double b) {
  Mat pts(1, 2);
  pts << a, b;
  return DiscreteMeasure(pts, Vec::Constant(2, 0.5));
}

ValueGrid solved_grid(const std::string& name, int n, int m, double eps,
                      int nodes) {
  const auto p = make_benchmark(name);
  MollifiedCoefficients mc(p, n, MollifierSpec::bump(m, 1, 7));
  GridSpec g;
  g.nodes_per_axis = nodes;
  g.eps = eps;
  g.jobs = 4;
  return solve_bellman(p, mc, g);
}

}  // namespace

TEST_CASE("fournier-guillin rate values") {
  // d = 1, q0 = 3/2: h_n = n^{-1/2} + n^{-1/3}
  CHECK(fournier_guillin_q0(1) == doctest::Approx(1.5));
  CHECK(fournier_guillin_h(1, 1) == doctest::Approx(2.0));
  CHECK(fournier_guillin_h(4, 1) == doctest::Approx(1.1300).epsilon(1e-4));
  // d = 2 keeps the logarithmic branch
  CHECK(fournier_guillin_h(4, 2) ==
        doctest::Approx(0.5 * std::log(5.0) + std::pow(4.0, -1.0 / 3.0)));
  // d = 3 switches q0 to 5/3
  CHECK(fournier_guillin_q0(3) == doctest::Approx(5.0 / 3.0));
  CHECK(fournier_guillin_h(8, 3) ==
        doctest::Approx(std::pow(8.0, -1.0 / 3.0) + std::pow(8.0, -0.4)));
}

TEST_CASE("lift of a constant grid is the constant") {
  auto vg = solved_grid("zero-cost", 2, 8, 0.2, 21);
  // zero-cost solves to identically zero
  const auto lv = lift(vg, 0.0, two_atoms(-1.0, 1.0));
  CHECK(lv.value == doctest::Approx(0.0));
  CHECK(lv.estimator == "exact-tensor");
  CHECK(lv.within_ell2);
}

TEST_CASE("n = 1 lift is a plain expectation; n = 2 enumerates the tensor") {
  auto vg1 = solved_grid("decoupled-bounded", 1, 8, 0.2, 41);
  const auto mu = two_atoms(-1.0, 0.5);
  Vec xa(1), xb(1);
  xa << -1.0;
  xb << 0.5;
  const double expect =
      0.5 * vg1.value(0.0, xa) + 0.5 * vg1.value(0.0, xb);
  CHECK(lift(vg1, 0.0, mu).value == doctest::Approx(expect).epsilon(1e-12));

  auto vg2 = solved_grid("decoupled-bounded", 2, 8, 0.2, 41);
  Vec xaa(2), xab(2), xba(2), xbb(2);
  xaa << -1.0, -1.0;
  xab << -1.0, 0.5;
  xba << 0.5, -1.0;
  xbb << 0.5, 0.5;
  const double expect2 =
      0.25 * (vg2.value(0.0, xaa) + vg2.value(0.0, xab) + vg2.value(0.0, xba) +
              vg2.value(0.0, xbb));
  CHECK(lift(vg2, 0.0, mu).value == doctest::Approx(expect2).epsilon(1e-12));
}

TEST_CASE("monte carlo estimator agrees with the exact tensor within 4 sigma") {
  auto vg = solved_grid("decoupled-bounded", 2, 8, 0.2, 41);
  Mat pts(1, 5);
  pts << -1.2, -0.4, 0.1, 0.8, 1.5;
  Vec w(5);
  w << 0.1, 0.2, 0.3, 0.25, 0.15;
  const DiscreteMeasure mu(pts, w);
  const auto exact = lift(vg, 0.0, mu);
  LiftEstimatorConfig mc_cfg;
  mc_cfg.tensor_budget = 1;  // force Monte Carlo
  mc_cfg.mc_draws = 20000;
  mc_cfg.seed = 17;
  const auto approx = lift(vg, 0.0, mu, mc_cfg);
  CHECK(approx.estimator == "monte-carlo");
  CHECK(approx.std_error > 0.0);
  CHECK(std::abs(approx.value - exact.value) <= 4.0 * approx.std_error);
}

TEST_CASE("lift is invariant under atom relabeling and linear in the grid") {
  auto vg = solved_grid("decoupled-bounded", 2, 8, 0.2, 41);
  Mat a(1, 3), b(1, 3);
  a << -1.0, 0.2, 0.9;
  b << 0.9, -1.0, 0.2;
  Vec wa(3), wb(3);
  wa << 0.5, 0.3, 0.2;
  wb << 0.2, 0.5, 0.3;
  CHECK(lift(vg, 0.0, DiscreteMeasure(a, wa)).value ==
        doctest::Approx(lift(vg, 0.0, DiscreteMeasure(b, wb)).value)
            .epsilon(1e-12));
}

TEST_CASE("atoms outside the box are refused with a listing") {
  auto vg = solved_grid("decoupled-bounded", 1, 8, 0.2, 21);
  CHECK_THROWS_WITH_AS(lift(vg, 0.0, two_atoms(-1.0, 9.0)),
                       doctest::Contains("atom#1"), std::invalid_argument);
}

TEST_CASE("oracle on trivial cost structures") {
  auto p = make_benchmark("decoupled-bounded");
  p.f = [](double, const Vec&, const DiscreteMeasure&, const Vec&) {
    return 0.0;
  };
  p.g = [](const Vec&, const DiscreteMeasure&) { return 0.0; };
  OracleConfig oc;
  oc.nodes = 401;
  CHECK(oracle_value_decoupled(p, 0.0, two_atoms(-1.0, 1.0), oc) ==
        doctest::Approx(0.0));

  auto punit = make_unit_running_reward(make_benchmark("decoupled-bounded"));
  CHECK(oracle_value_decoupled(punit, 0.25, two_atoms(-1.0, 1.0), oc) ==
        doctest::Approx(punit.T - 0.25).epsilon(1e-6));
}

TEST_CASE("golden oracle value of the shipped benchmark") {
  // Dense single-agent solve at (t = 0, mu = half at -1, half at +1),
  // Richardson-extrapolated; the value is resolution-stable to 12 digits
  // (0.300083865657 at nodes = 1601 and 3201, radius 4).
  const auto p = make_benchmark("decoupled-bounded");
  Mat pts(1, 2);
  pts << -1.0, 1.0;
  const DiscreteMeasure mu(pts, Vec::Constant(2, 0.5));
  OracleConfig oc;
  oc.radius = 4.0;
  oc.nodes = 1601;
  CHECK(oracle_value_decoupled(p, 0.0, mu, oc) ==
        doctest::Approx(0.300083865657).epsilon(1e-6));
}

TEST_CASE("oracle refuses unsound inputs") {
  const auto mf = make_benchmark("mean-reverting-mf");
  CHECK_THROWS_WITH_AS(oracle_value_decoupled(mf, 0.0, two_atoms(-1.0, 1.0)),
                       doctest::Contains("unsound"), std::invalid_argument);

  auto with_common = make_benchmark("decoupled-bounded");
  with_common.sigma0 = [](double, const Vec&) {
    return Mat(Mat::Identity(1, 1));
  };
  CHECK_THROWS_WITH_AS(
      oracle_value_decoupled(with_common, 0.0, two_atoms(-1.0, 1.0)),
      doctest::Contains("sigma0"), std::invalid_argument);
}

TEST_CASE("zero-cost ladder is identically zero") {
  const auto p = make_benchmark("zero-cost");
  LadderConfig cfg;
  cfg.grid.nodes_per_axis = 31;
  cfg.grid.radius = 3.0;
  cfg.quad_nodes = 5;
  cfg.jobs = 4;
  const auto reports =
      run_ladder(p, 0.0, two_atoms(-0.5, 0.5), {0.2, 0.1}, {1, 2}, {8, 16}, cfg);
  REQUIRE(reports.size() == 3);
  for (const auto& rep : reports)
    for (double v : rep.values) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("ladder reports carry the three axes with their shapes") {
  const auto p = make_benchmark("decoupled-bounded");
  LadderConfig cfg;
  cfg.grid.nodes_per_axis = 81;
  cfg.quad_nodes = 5;
  cfg.jobs = 4;
  cfg.oracle.nodes = 401;
  const auto mu = DiscreteMeasure::dirac(Vec::Zero(1));
  const auto reports =
      run_ladder(p, 0.0, mu, {0.4, 0.2, 0.1}, {1, 2}, {8, 16}, cfg);
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].axis == "epsilon");
  CHECK(reports[0].ratios.size() == 1);
  CHECK(reports[1].axis == "m");
  CHECK(reports[1].pass);
  CHECK(reports[2].axis == "n");
  CHECK(reports[2].reference_provenance == "oracle-decoupled");
  const auto csv = reports_to_csv(reports);
  CHECK(csv.find("epsilon") != std::string::npos);
  const auto dat = reports_to_gnuplot(reports);
  CHECK(dat.find("# axis: n") != std::string::npos);
}

TEST_CASE("W1-lipschitz lifting quotient is dominated by the gradient bound") {
  const auto p = make_benchmark("decoupled-bounded");
  MollifiedCoefficients mc(p, 2, MollifierSpec::bump(16, 1, 5));
  GridSpec g;
  g.nodes_per_axis = 81;
  g.eps = 0.1;
  g.jobs = 4;
  const auto vg = solve_bellman(p, mc, g);
  const double c4 = 2.0 * vg.max_particle_gradient(1);

  CounterRng rng(CounterRng::derive_key(31, StreamRole::Probe));
  for (int trial = 0; trial < 25; ++trial) {
    Mat a(1, 3);
    Vec w(3);
    for (int k = 0; k < 3; ++k) {
      a(0, k) = 1.5 * rng.normal();
      w[k] = 0.1 + rng.uniform();
    }
    w /= w.sum();
    Mat b = a;
    for (int k = 0; k < 3; ++k) b(0, k) += 0.4 * rng.normal();
    b = b.cwiseMax(-2.9).cwiseMin(2.9);
    a = a.cwiseMax(-2.9).cwiseMin(2.9);
    const DiscreteMeasure mu(a, w), nu(b, w);
    const double w1 = wasserstein_lp(mu, nu, 1.0);
    if (w1 < 0.01) continue;
    const double quotient =
        std::abs(lift(vg, 0.0, mu).value - lift(vg, 0.0, nu).value) / w1;
    CHECK(quotient <= c4 * 1.1);
  }
}

TEST_CASE("holder-in-time probe and the (1+T)K bound") {
  const auto p = make_benchmark("decoupled-bounded");
  MollifiedCoefficients mc(p, 1, MollifierSpec::bump(16, 1, 7));
  GridSpec g;
  g.nodes_per_axis = 101;
  g.eps = 0.1;
  g.jobs = 4;
  const auto vg = solve_bellman(p, mc, g);
  const auto mu = two_atoms(-1.0, 1.0);
  LiftEstimatorConfig cfg;
  cfg.interpolate_time = true;
  const double v0 = lift(vg, 0.0, mu, cfg).value;
  CHECK(std::abs(v0) <= (1.0 + p.T) * p.K);
  // |v(t) - v(t')| <= C sqrt(|t - t'|): fit C on the largest window and
  // check the dyadic shrinkage
  const double c_fit =
      std::abs(lift(vg, 0.5, mu, cfg).value - v0) / std::sqrt(0.5);
  for (double dt : {0.25, 0.125, 0.0625}) {
    const double gap = std::abs(lift(vg, dt, mu, cfg).value - v0);
    CHECK(gap <= std::max(3.0 * c_fit, 0.05) * std::sqrt(dt));
  }
}
