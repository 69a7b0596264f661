#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mfc/benchmarks.hpp"
#include "mfc/bellman.hpp"
#include "mfc/rng.hpp"

using namespace mfc;

namespace {

ProblemSpec zero_costs_problem() {
  auto p = make_benchmark("decoupled-bounded");
  p.name = "zeroed";
  p.f = [](double, const Vec&, const DiscreteMeasure&, const Vec&) {
    return 0.0;
  };
  p.g = [](const Vec&, const DiscreteMeasure&) { return 0.0; };
  return p;
}

}  // namespace

TEST_CASE("assemble_q examples") {
  auto p = zero_costs_problem();

  SUBCASE("identity from the eps term alone") {
    Vec xbar = Vec::Zero(2);
    const auto q = assemble_q(p, 2, 0.0, xbar,
                              {p.control_set[0], p.control_set[0]}, 1.0);
    CHECK((q.q - Mat::Identity(2, 2)).norm() == doctest::Approx(0.0));
    CHECK(q.min_eigenvalue == doctest::Approx(1.0));
    CHECK(q.positive_definite(1.0));
  }

  SUBCASE("rank one coupling from the stacked common volatility") {
    p.sigma0 = [](double, const Vec&) { return Mat(Mat::Ones(1, 1)); };
    Vec xbar = Vec::Zero(2);
    const auto q = assemble_q(p, 2, 0.0, xbar,
                              {p.control_set[0], p.control_set[0]}, 0.0);
    Mat want(2, 2);
    want << 1.0, 1.0, 1.0, 1.0;
    CHECK((q.q - want).norm() == doctest::Approx(0.0));
    CHECK(q.min_eigenvalue == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(q.symmetry_error <= 1e-12);
  }

  SUBCASE("eigenvalues 1.01 and 3.01") {
    p.sigma = [](double, const Vec&, const Vec&) { return Mat(Mat::Ones(1, 1)); };
    p.sigma0 = [](double, const Vec&) { return Mat(Mat::Ones(1, 1)); };
    Vec xbar = Vec::Zero(2);
    const auto q = assemble_q(p, 2, 0.0, xbar,
                              {p.control_set[0], p.control_set[0]}, 0.1);
    Eigen::SelfAdjointEigenSolver<Mat> es(q.q);
    CHECK(es.eigenvalues()[0] == doctest::Approx(1.01));
    CHECK(es.eigenvalues()[1] == doctest::Approx(3.01));
    CHECK(q.positive_definite(0.1));
  }
}

TEST_CASE("zero costs solve to the zero value exactly") {
  const auto p = zero_costs_problem();
  MollifiedCoefficients mc(p, 1, MollifierSpec::bump(8, 1, 7));
  GridSpec g;
  g.nodes_per_axis = 31;
  g.eps = 0.1;
  const auto vg = solve_bellman(p, mc, g);
  for (int k = 0; k <= vg.steps(); ++k)
    for (std::int64_t node = 0; node < vg.nodes(); ++node)
      CHECK(vg.at(k, node) == 0.0);
}

TEST_CASE("unit running cost integrates to T - t whatever the dynamics") {
  const auto p = make_unit_running_reward(make_benchmark("decoupled-bounded"));
  MollifiedCoefficients mc(p, 1, MollifierSpec::bump(16, 1, 7));
  GridSpec g;
  g.nodes_per_axis = 101;
  g.eps = 0.1;
  g.jobs = 2;
  const auto vg = solve_bellman(p, mc, g);
  Vec x(1);
  for (double t : {0.0, 0.25, 0.5}) {
    const int slice = vg.slice_of(t, true);
    for (double xv : {-2.0, 0.0, 1.5}) {
      x[0] = xv;
      CHECK(std::abs(vg.value(slice * vg.dt(), x) - (p.T - slice * vg.dt())) <=
            1e-3);
    }
  }
  // terminal slice is the mollified terminal cost exactly (zero here)
  for (std::int64_t node = 0; node < vg.nodes(); ++node)
    CHECK(vg.at(vg.steps(), node) == 0.0);
  CHECK(vg.decomposition_check_passed);
  // the value depends on t only, so spatial gradients vanish exactly
  CHECK(vg.max_particle_gradient(1) == 0.0);
}

TEST_CASE("terminal slice reproduces the mollified cost at the nodes") {
  const auto p = make_benchmark("mean-reverting-mf");
  MollifiedCoefficients mc(p, 1, MollifierSpec::bump(8, 1, 7));
  GridSpec g;
  g.nodes_per_axis = 21;
  g.eps = 0.2;
  const auto vg = solve_bellman(p, mc, g);
  Vec x(1);
  for (int i = 0; i < g.nodes_per_axis; ++i) {
    x[0] = vg.coord(i);
    CHECK(vg.at(vg.steps(), i) == doctest::Approx(mc.g_i(0, x)).epsilon(1e-14));
  }
}

TEST_CASE("raising f pointwise never lowers the value") {
  auto p = make_benchmark("decoupled-bounded");
  MollifiedCoefficients lo(p, 1, MollifierSpec::bump(8, 1, 7));
  auto p_hi = p;
  p_hi.f = [base = p.f](double t, const Vec& x, const DiscreteMeasure& mu,
                        const Vec& a) { return base(t, x, mu, a) + 0.05; };
  MollifiedCoefficients hi(p_hi, 1, MollifierSpec::bump(8, 1, 7));
  GridSpec g;
  g.nodes_per_axis = 41;
  g.eps = 0.1;
  const auto v_lo = solve_bellman(p, lo, g);
  const auto v_hi = solve_bellman(p_hi, hi, g);
  REQUIRE(v_lo.steps() == v_hi.steps());
  for (int k = 0; k <= v_lo.steps(); ++k)
    for (std::int64_t node = 0; node < v_lo.nodes(); ++node)
      CHECK(v_hi.at(k, node) >= v_lo.at(k, node) - 1e-12);
}

TEST_CASE("exchangeable problems give exchangeable values") {
  const auto p = make_benchmark("mean-reverting-mf");
  MollifiedCoefficients mc(p, 2, MollifierSpec::bump(8, 1, 5));
  GridSpec g;
  g.nodes_per_axis = 31;
  g.eps = 0.2;
  g.jobs = 4;
  const auto vg = solve_bellman(p, mc, g);
  Vec xy(2), yx(2);
  xy << 0.8, -0.5;
  yx << -0.5, 0.8;
  CHECK(vg.value(0.0, xy) == doctest::Approx(vg.value(0.0, yx)).epsilon(1e-9));
}

TEST_CASE("per-particle decomposition matches the joint maximization") {
  const auto p = make_benchmark("mean-reverting-mf");
  MollifiedCoefficients mc(p, 2, MollifierSpec::bump(8, 1, 5));
  GridSpec g;
  g.nodes_per_axis = 21;
  g.eps = 0.2;
  const auto vg = solve_bellman(p, mc, g);
  CHECK(vg.decomposition_check_passed);
}

TEST_CASE("solver rejects what it cannot honor") {
  const auto p = make_benchmark("decoupled-bounded");
  MollifiedCoefficients mc4(p, 4, MollifierSpec::bump(8, 1, 5));
  GridSpec g;
  CHECK_THROWS_WITH_AS(solve_bellman(p, mc4, g), doctest::Contains("dn <= 3"),
                       std::invalid_argument);

  MollifiedCoefficients mc(p, 1, MollifierSpec::bump(8, 1, 7));
  GridSpec tiny;
  tiny.nodes_per_axis = 3;
  CHECK_THROWS_AS(solve_bellman(p, mc, tiny), std::invalid_argument);

  GridSpec cfl;
  cfl.nodes_per_axis = 101;
  cfl.eps = 0.4;
  cfl.time_steps = 3;  // way below the stable count
  CHECK_THROWS_WITH_AS(solve_bellman(p, mc, cfl), doctest::Contains("CFL"),
                       std::invalid_argument);
}

TEST_CASE("a small box is reported in the grid warnings") {
  const auto p = make_benchmark("decoupled-bounded");
  MollifiedCoefficients mc(p, 1, MollifierSpec::bump(8, 1, 7));
  GridSpec g;
  g.radius = 1.0;  // the two-peak terminal reward still varies at the edge
  g.nodes_per_axis = 21;
  g.eps = 0.2;
  g.boundary_warn_threshold = 1e-4;
  const auto vg = solve_bellman(p, mc, g);
  REQUIRE(!vg.warnings.empty());
  CHECK(vg.warnings.front().find("boundary") != std::string::npos);
}

TEST_CASE("solves are bitwise independent of the job count") {
  const auto p = make_benchmark("mean-reverting-mf");
  MollifiedCoefficients mc(p, 2, MollifierSpec::bump(8, 1, 5));
  GridSpec g1;
  g1.nodes_per_axis = 21;
  g1.eps = 0.2;
  g1.jobs = 1;
  GridSpec g4 = g1;
  g4.jobs = 4;
  const auto a = solve_bellman(p, mc, g1);
  const auto b = solve_bellman(p, mc, g4);
  REQUIRE(a.steps() == b.steps());
  for (int k = 0; k <= a.steps(); ++k)
    for (std::int64_t node = 0; node < a.nodes(); ++node)
      CHECK(a.at(k, node) == b.at(k, node));
}

TEST_CASE("value grid round-trips through the json + csv pair") {
  const auto p = make_benchmark("decoupled-bounded");
  MollifiedCoefficients mc(p, 1, MollifierSpec::bump(8, 1, 7));
  GridSpec g;
  g.nodes_per_axis = 21;
  g.eps = 0.3;
  const auto vg = solve_bellman(p, mc, g);
  const auto base = std::filesystem::temp_directory_path() / "mfc_vg_roundtrip";
  vg.save(base.string());
  const auto back = ValueGrid::load(base.string());
  CHECK(back.problem() == vg.problem());
  CHECK(back.steps() == vg.steps());
  CHECK(back.spec().radius == vg.spec().radius);  // bitwise via shortest json
  CHECK(back.spec().eps == vg.spec().eps);
  double worst = 0.0;
  for (int k = 0; k <= vg.steps(); ++k)
    for (std::int64_t node = 0; node < vg.nodes(); ++node)
      worst = std::max(worst, std::abs(back.at(k, node) - vg.at(k, node)));
  CHECK(worst <= 1e-15);
}

TEST_CASE("dense half-spacing reference brackets the benchmark solve") {
  const auto p = make_benchmark("decoupled-bounded");
  MollifiedCoefficients mc(p, 1, MollifierSpec::bump(16, 1, 7));
  GridSpec coarse;
  coarse.nodes_per_axis = 101;
  coarse.eps = 0.1;
  coarse.jobs = 2;
  GridSpec fine = coarse;
  fine.nodes_per_axis = 201;
  const auto vc = solve_bellman(p, mc, coarse);
  const auto vf = solve_bellman(p, mc, fine);
  // Richardson self-comparison: the coarse-fine gap is itself the scheme
  // error estimate; the coarse solve must sit within 10x of it around the
  // initial time at interior points.
  Vec x(1);
  double max_gap = 0.0;
  for (double xv : {-1.0, -0.3, 0.4, 1.2}) {
    x[0] = xv;
    max_gap = std::max(max_gap, std::abs(vc.value(0.0, x) - vf.value(0.0, x)));
  }
  CHECK(max_gap < 0.02);  // frozen scheme-error scale for these grids
  const double estimate = std::max(max_gap, 1e-4);
  for (double xv : {-1.0, 0.4}) {
    x[0] = xv;
    CHECK(std::abs(vc.value(0.0, x) - vf.value(0.0, x)) <= 10.0 * estimate);
  }
}

TEST_CASE("terminal curvature dominates for frozen dynamics near T") {
  // g a smoothed min(x^2, 1): curvature 2 in the well, a negative dip at the
  // shoulder; with frozen dynamics and small eps the solution stays at the
  // mollified terminal cost, so the grid curvature matches it.
  ProblemSpec p;
  p.name = "frozen-well";
  p.d = 1;
  p.T = 0.05;
  Vec a0(1);
  a0 << 0.0;
  p.control_set = {a0};
  p.K = 2.0;
  p.rho = 0.5;
  p.beta = 1.0;
  p.mu_independent = true;
  p.time_invariant = true;
  p.b = [](double, const Vec&, const DiscreteMeasure&, const Vec&) {
    return Vec(Vec::Zero(1));
  };
  p.sigma = [](double, const Vec&, const Vec&) { return Mat(Mat::Zero(1, 1)); };
  p.sigma0 = [](double, const Vec&) { return Mat(Mat::Zero(1, 1)); };
  p.f = [](double, const Vec&, const DiscreteMeasure&, const Vec&) {
    return 0.0;
  };
  p.g = [](const Vec& x, const DiscreteMeasure&) {
    return std::min(x[0] * x[0], 1.0);
  };
  MollifiedCoefficients mc(p, 1, MollifierSpec::bump(8, 1, 9));
  GridSpec g;
  g.nodes_per_axis = 121;
  g.radius = 2.0;
  g.eps = 0.05;
  const auto vg = solve_bellman(p, mc, g);

  // curvature of the mollified terminal slice alone
  double term_lo = 0.0;
  const double h = vg.h();
  for (int i = 1; i + 1 < g.nodes_per_axis; ++i) {
    const double d2 = (vg.at(vg.steps(), i + 1) - 2.0 * vg.at(vg.steps(), i) +
                       vg.at(vg.steps(), i - 1)) /
                      (h * h);
    term_lo = std::min(term_lo, d2);
  }
  const auto [lo, hi] = vg.curvature_range(1);
  CHECK(term_lo < -0.5);          // the shoulder dip is a real feature
  CHECK(lo >= 1.3 * term_lo);     // bounded below by ~ the g curvature
  CHECK(hi <= 2.0 * 1.3);         // and above by ~ the well curvature
}

TEST_CASE("gradient and curvature reports carry the expected shapes") {
  const auto p = make_benchmark("decoupled-bounded");
  std::vector<ValueGrid> grids;
  for (int n : {1, 2}) {
    MollifiedCoefficients mc(p, n, MollifierSpec::bump(8, 1, 5));
    GridSpec g;
    g.nodes_per_axis = 41;
    g.eps = 0.2;
    g.jobs = 4;
    grids.push_back(solve_bellman(p, mc, g));
  }
  const auto rep = gradient_bound_check({&grids[0], &grids[1]});
  CHECK(rep.products.size() == 2);
  CHECK(rep.variation() < 0.25);

  std::vector<ValueGrid> eps_grids;
  for (double eps : {0.4, 0.2}) {
    MollifiedCoefficients mc(p, 1, MollifierSpec::bump(8, 1, 5));
    GridSpec g;
    g.nodes_per_axis = 81;
    g.eps = eps;
    eps_grids.push_back(solve_bellman(p, mc, g));
  }
  const auto curv = second_derivative_bound_check({&eps_grids[0], &eps_grids[1]});
  CHECK(curv.eps_values.size() == 2);
  CHECK(curv.fitted_upper_constant > 0.0);
  CHECK(std::isfinite(curv.lower_uniform_bound));
  // halving eps grows the upper curvature by at most ~4x plus slack
  CHECK(curv.upper[1] <= 4.0 * 1.3 * std::max(curv.upper[0], 1e-9));
  // zero value grids have zero curvature everywhere
  const auto zp = zero_costs_problem();
  MollifiedCoefficients zmc(zp, 1, MollifierSpec::bump(8, 1, 5));
  GridSpec zg;
  zg.nodes_per_axis = 21;
  zg.eps = 0.2;
  const auto zvg = solve_bellman(zp, zmc, zg);
  const auto zcurv = second_derivative_bound_check({&zvg});
  CHECK(zcurv.upper.front() == 0.0);
  CHECK(zcurv.lower.front() == 0.0);
}
