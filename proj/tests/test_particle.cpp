#include <doctest.h>

#include <cmath>

#include "mfc/benchmarks.hpp"
#include "mfc/particle.hpp"

using namespace mfc;

namespace {

ProblemSpec frozen_problem() {
  auto p = make_pure_common_noise(1);
  p.name = "frozen";
  p.sigma0 = [](double, const Vec&) { return Mat(Mat::Zero(1, 1)); };
  return p;
}

DiscreteMeasure two_atoms(double a, double b) {
  Mat pts(1, 2);
  pts << a, b;
  return DiscreteMeasure(pts, Vec::Constant(2, 0.5));
}

}  // namespace

TEST_CASE("frozen dynamics keep every copy pinned at its atom") {
  const auto p = frozen_problem();
  SimulationConfig cfg;
  cfg.n_common = 4;
  cfg.n_steps = 16;
  const auto paths = simulate_mean_field(p, two_atoms(-1.0, 2.0),
                                         ControlPolicy::constant(p.control_set[0]),
                                         cfg);
  for (int s = 0; s < paths.n_scenarios(); ++s)
    for (int k = 0; k <= paths.n_steps(); ++k) {
      CHECK(paths.state(s, 0, k)[0] == -1.0);
      CHECK(paths.state(s, 1, k)[0] == 2.0);
    }
}

TEST_CASE("pure common noise: copies coincide within a path, variance is T - t0") {
  const auto p = make_pure_common_noise(1);
  SimulationConfig cfg;
  cfg.t0 = 0.25;
  cfg.n_common = 10000;
  cfg.n_steps = 8;
  cfg.common_seed = 3;
  cfg.idio_seed = 4;
  cfg.jobs = 4;
  const auto paths = simulate_mean_field(
      p, DiscreteMeasure::dirac(Vec::Zero(1)),
      ControlPolicy::constant(p.control_set[0]), cfg);

  double sum = 0.0, sumsq = 0.0;
  for (int s = 0; s < paths.n_scenarios(); ++s) {
    const double x = paths.state(s, 0, paths.n_steps())[0];
    sum += x;
    sumsq += x * x;
  }
  const double var = sumsq / paths.n_scenarios();
  const double expected = p.T - cfg.t0;
  // 3 standard errors of a chi^2 variance estimate
  const double band = 3.0 * expected * std::sqrt(2.0 / paths.n_scenarios());
  CHECK(std::abs(sum / paths.n_scenarios()) < 0.03);
  CHECK(std::abs(var - expected) <= band);
}

TEST_CASE("identical seeds give bitwise identical bundles") {
  const auto p = make_benchmark("mean-reverting-mf");
  SimulationConfig cfg;
  cfg.n_common = 6;
  cfg.n_copies = 8;
  cfg.n_steps = 16;
  cfg.eps = 0.2;
  const auto mu = two_atoms(-0.5, 0.5);
  const auto policy = ControlPolicy::constant(p.control_set[1]);
  const auto a = simulate_mean_field(p, mu, policy, cfg);
  const auto b = simulate_mean_field(p, mu, policy, cfg);
  for (int s = 0; s < a.n_scenarios(); ++s)
    for (int c = 0; c < a.n_particles(); ++c)
      for (int k = 0; k <= a.n_steps(); ++k)
        CHECK(a.state(s, c, k)[0] == b.state(s, c, k)[0]);
}

TEST_CASE("common-noise consistency: idiosyncratic seeds do not move the conditional mean") {
  const auto p = make_benchmark("mean-reverting-mf");
  SimulationConfig cfg;
  cfg.n_common = 300;
  cfg.n_copies = 64;
  cfg.n_steps = 32;
  cfg.common_seed = 5;
  cfg.idio_seed = 6;
  cfg.jobs = 4;
  const auto mu = two_atoms(-0.5, 0.5);
  const auto policy = ControlPolicy::constant(p.control_set[2]);
  const auto a = simulate_mean_field(p, mu, policy, cfg);
  cfg.idio_seed = 1006;
  const auto b = simulate_mean_field(p, mu, policy, cfg);
  double rms = 0.0;
  for (int s = 0; s < a.n_scenarios(); ++s) {
    const double ma = a.conditional_measure(s, a.n_steps()).mean()[0];
    const double mb = b.conditional_measure(s, b.n_steps()).mean()[0];
    rms += (ma - mb) * (ma - mb);
  }
  rms = std::sqrt(rms / a.n_scenarios());
  // the conditional law depends on W0 only; two independent 64-copy
  // estimates of the same mean differ by ~ sqrt(2) * sd/sqrt(64)
  CHECK(rms < 0.2);
}

TEST_CASE("epsilon-only dynamics produce independent unit-variance increments") {
  auto p = frozen_problem();
  MollifiedCoefficients mc(p, 2, MollifierSpec::bump(8, 1, 7));
  SimulationConfig cfg;
  cfg.eps = 1.0;
  cfg.n_common = 6000;
  cfg.n_steps = 8;
  cfg.common_seed = 9;
  cfg.idio_seed = 10;
  cfg.jobs = 4;
  Vec x0(2);
  x0 << 0.3, -0.7;
  std::vector<ControlPolicy> policies(2,
                                      ControlPolicy::constant(p.control_set[0]));
  const auto paths = simulate_mollified_particles(mc, 0.0, x0, policies, cfg);
  double v1 = 0.0, v2 = 0.0, cov = 0.0;
  for (int s = 0; s < paths.n_scenarios(); ++s) {
    const double d1 = paths.state(s, 0, paths.n_steps())[0] - 0.3;
    const double d2 = paths.state(s, 1, paths.n_steps())[0] + 0.7;
    v1 += d1 * d1;
    v2 += d2 * d2;
    cov += d1 * d2;
  }
  const int n = paths.n_scenarios();
  CHECK(std::abs(v1 / n - p.T) < 0.06);
  CHECK(std::abs(v2 / n - p.T) < 0.06);
  CHECK(std::abs(cov / n) < 0.05);
}

TEST_CASE("frozen mollified particles stay where they start") {
  auto p = frozen_problem();
  MollifiedCoefficients mc(p, 2, MollifierSpec::bump(8, 1, 5));
  SimulationConfig cfg;
  cfg.n_common = 3;
  cfg.n_steps = 8;
  Vec x0(2);
  x0 << 0.4, -1.2;
  std::vector<ControlPolicy> policies(2,
                                      ControlPolicy::constant(p.control_set[0]));
  const auto paths = simulate_mollified_particles(mc, 0.0, x0, policies, cfg);
  for (int s = 0; s < paths.n_scenarios(); ++s)
    for (int k = 0; k <= paths.n_steps(); ++k) {
      CHECK(paths.state(s, 0, k)[0] == 0.4);
      CHECK(paths.state(s, 1, k)[0] == -1.2);
    }
}

TEST_CASE("shared sigma0 couples the two particles completely") {
  auto p = make_pure_common_noise(1);
  MollifiedCoefficients mc(p, 2, MollifierSpec::bump(8, 1, 7));
  SimulationConfig cfg;
  cfg.n_common = 500;
  cfg.n_steps = 8;
  Vec x0 = Vec::Zero(2);
  std::vector<ControlPolicy> policies(2,
                                      ControlPolicy::constant(p.control_set[0]));
  const auto paths = simulate_mollified_particles(mc, 0.0, x0, policies, cfg);
  for (int s = 0; s < paths.n_scenarios(); ++s)
    CHECK(paths.state(s, 0, paths.n_steps())[0] ==
          doctest::Approx(paths.state(s, 1, paths.n_steps())[0]));
}

TEST_CASE("configuration and divergence errors") {
  const auto p = make_benchmark("mean-reverting-mf");  // mu-dependent
  SimulationConfig cfg;
  cfg.n_copies = 1;
  CHECK_THROWS_WITH_AS(
      simulate_mean_field(p, DiscreteMeasure::dirac(Vec::Zero(1)),
                          ControlPolicy::constant(p.control_set[0]), cfg),
      doctest::Contains("copies"), std::invalid_argument);

  auto blow = frozen_problem();
  blow.mu_independent = true;
  blow.b = [](double, const Vec& x, const DiscreteMeasure&, const Vec&) {
    return Vec(Vec::Constant(1, std::exp(x[0] * x[0]) * 1e30));
  };
  SimulationConfig c2;
  c2.n_common = 1;
  c2.n_steps = 64;
  CHECK_THROWS_AS(simulate_mean_field(blow, DiscreteMeasure::dirac(Vec::Ones(1)),
                                      ControlPolicy::constant(blow.control_set[0]),
                                      c2),
                  NumericalAbort);
}

TEST_CASE("policies reject actions off the control grid") {
  const auto p = make_benchmark("decoupled-bounded");
  const auto rogue = ControlPolicy::feedback(
      [](double, const Vec&, const DiscreteMeasure&) {
        return Vec(Vec::Constant(1, 0.33));
      });
  SimulationConfig cfg;
  cfg.n_common = 1;
  cfg.n_steps = 2;
  CHECK_THROWS_WITH_AS(
      simulate_mean_field(p, DiscreteMeasure::dirac(Vec::Zero(1)), rogue, cfg),
      doctest::Contains("control grid"), std::invalid_argument);

  // open loop table with a step per increment works and is length checked
  std::vector<Vec> table(2, p.control_set[1]);
  const auto ol = ControlPolicy::open_loop(table);
  CHECK_NOTHROW(
      simulate_mean_field(p, DiscreteMeasure::dirac(Vec::Zero(1)), ol, cfg));
}

TEST_CASE("moment bound probe: frozen dynamics and the pure-common-noise slope") {
  const auto frozen = frozen_problem();
  SimulationConfig cfg;
  cfg.n_common = 400;
  cfg.n_steps = 64;
  cfg.jobs = 4;
  const std::vector<DiscreteMeasure> inits = {two_atoms(-1.0, 1.0),
                                              two_atoms(-2.0, 2.0)};
  const auto rep_frozen =
      moment_bound_probe(frozen, inits, ControlPolicy::constant(frozen.control_set[0]),
                         {0.125, 0.25, 0.5}, cfg);
  CHECK(rep_frozen.sup_increment_slope == doctest::Approx(0.0));
  CHECK(rep_frozen.endpoint_increment_slope == doctest::Approx(0.0));

  const auto pure = make_pure_common_noise(1);
  const auto rep = moment_bound_probe(
      pure, inits, ControlPolicy::constant(pure.control_set[0]),
      {0.125, 0.25, 0.5}, cfg);
  CHECK(rep.endpoint_increment_slope == doctest::Approx(1.0).epsilon(0.15));
  CHECK(rep.second_moment_constant > 0.0);
  CHECK(rep.stability_constant == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rep.to_json().find("endpoint_increment_slope") != std::string::npos);
}

TEST_CASE("conditional measure flow moves like sqrt(h)") {
  const auto p = make_benchmark("mean-reverting-mf");
  Mat pts(1, 3);
  pts << -1.0, 0.2, 1.0;
  Vec w(3);
  w << 0.3, 0.4, 0.3;
  const DiscreteMeasure mu(pts, w);
  SimulationConfig cfg;
  cfg.n_common = 120;
  cfg.n_copies = 32;
  cfg.n_steps = 256;
  cfg.common_seed = 5;
  cfg.idio_seed = 6;
  cfg.jobs = 4;
  const auto paths = simulate_mean_field(
      p, mu, ControlPolicy::constant(p.control_set[3]), cfg);

  // E sup_{[s, s+h]} W2 of the conditional laws over dyadic windows
  std::vector<double> log_h, log_w;
  for (int win : {16, 8, 4, 2, 1}) {
    double acc = 0.0;
    int count = 0;
    for (int sc = 0; sc < 50; ++sc)
      for (int start = 0; start + win <= 64; start += 16) {
        const auto base = paths.conditional_measure(sc, start);
        double peak = 0.0;
        for (int k = 1; k <= win; ++k)
          peak = std::max(peak,
                          wasserstein_1d(
                              base, paths.conditional_measure(sc, start + k),
                              2.0));
        acc += peak;
        ++count;
      }
    log_h.push_back(std::log(win * paths.dt()));
    log_w.push_back(std::log(acc / count));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < log_h.size(); ++i) {
    sx += log_h[i];
    sy += log_w[i];
    sxx += log_h[i] * log_h[i];
    sxy += log_h[i] * log_w[i];
  }
  const double n = static_cast<double>(log_h.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope >= 0.4);
  CHECK(slope <= 0.6);
}

TEST_CASE("moment bound constants are stable under step refinement") {
  const auto p = make_benchmark("decoupled-bounded");
  const std::vector<DiscreteMeasure> inits = {two_atoms(-1.0, 1.0),
                                              two_atoms(-2.0, 2.0)};
  const auto policy = ControlPolicy::constant(p.control_set.back());
  SimulationConfig coarse;
  coarse.n_common = 300;
  coarse.n_steps = 32;
  coarse.jobs = 4;
  SimulationConfig fine = coarse;
  fine.n_steps = 64;
  const auto a = moment_bound_probe(p, inits, policy, {0.25, 0.5}, coarse);
  const auto b = moment_bound_probe(p, inits, policy, {0.25, 0.5}, fine);
  CHECK(a.second_moment_constant > 0.0);
  CHECK(std::isfinite(a.stability_constant));
  CHECK(a.stability_constant ==
        doctest::Approx(b.stability_constant).epsilon(0.25));
}

TEST_CASE("trajectory dump format") {
  const auto p = frozen_problem();
  SimulationConfig cfg;
  cfg.n_common = 1;
  cfg.n_steps = 2;
  const auto paths = simulate_mean_field(
      p, two_atoms(0.0, 1.0), ControlPolicy::constant(p.control_set[0]), cfg);
  const auto csv = paths.to_csv();
  CHECK(csv.rfind("scenario,particle,step,time,x1\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 1 * 2 * 3);
}
