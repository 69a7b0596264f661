#include <doctest.h>

#include <cmath>

#include "mfc/measure.hpp"
#include "mfc/rng.hpp"

using namespace mfc;

namespace {

DiscreteMeasure cloud(CounterRng& rng, int atoms, double spread = 2.0) {
  Mat pts(1, atoms);
  Vec w(atoms);
  for (int k = 0; k < atoms; ++k) {
    pts(0, k) = spread * rng.normal();
    w[k] = 0.05 + rng.uniform();
  }
  w /= w.sum();
  return DiscreteMeasure(std::move(pts), std::move(w));
}

Vec scalar(double x) {
  Vec v(1);
  v[0] = x;
  return v;
}

}  // namespace

TEST_CASE("moment examples") {
  CHECK(moment(DiscreteMeasure::dirac(Vec::Zero(1)), 2.0) == 0.0);

  Mat pm(1, 2);
  pm << 1.0, -1.0;
  const DiscreteMeasure sym(pm, Vec::Constant(2, 0.5));
  CHECK(moment(sym, 2.0) == doctest::Approx(1.0));

  Mat p2(1, 2);
  p2 << 0.0, 2.0;
  Vec w2(2);
  w2 << 0.25, 0.75;
  const DiscreteMeasure skew(p2, w2);
  CHECK(moment(skew, 2.0) == doctest::Approx(3.0));

  CHECK_THROWS_AS(moment(sym, 0.5), std::invalid_argument);
}

TEST_CASE("constructor invariants") {
  Mat pts(1, 2);
  pts << 0.0, 1.0;
  Vec bad(2);
  bad << 0.5, 0.6;  // sums to 1.1
  CHECK_THROWS_AS(DiscreteMeasure(pts, bad), std::invalid_argument);
  Vec neg(2);
  neg << -0.1, 1.1;
  CHECK_THROWS_AS(DiscreteMeasure(pts, neg), std::invalid_argument);
  Vec nearly(2);
  nearly << 0.5, 0.5 + 5e-10;  // renormalized silently
  const DiscreteMeasure ok(pts, nearly);
  CHECK(ok.weights().sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(DiscreteMeasure::empirical({}), std::invalid_argument);
}

TEST_CASE("wasserstein_1d examples") {
  CounterRng rng(CounterRng::derive_key(1, StreamRole::Probe));
  const auto mu = cloud(rng, 6);
  CHECK(wasserstein_1d(mu, mu, 2.0) == doctest::Approx(0.0).epsilon(1e-12));

  const auto d0 = DiscreteMeasure::dirac(scalar(0.0));
  const auto da = DiscreteMeasure::dirac(scalar(-2.7));
  CHECK(wasserstein_1d(d0, da, 1.0) == doctest::Approx(2.7));

  Mat pts(1, 2);
  pts << 0.0, 1.0;
  const DiscreteMeasure half(pts, Vec::Constant(2, 0.5));
  CHECK(wasserstein_1d(half, d0, 1.0) == doctest::Approx(0.5));

  Mat p2(1, 1);
  p2 << 0.0;
  Vec w1(1);
  w1 << 1.0;
  CHECK_THROWS_AS(wasserstein_1d(half, DiscreteMeasure(Mat::Zero(2, 1), w1), 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(wasserstein_1d(half, d0, 0.9), std::invalid_argument);
}

TEST_CASE("wasserstein_lp examples") {
  const auto d0 = DiscreteMeasure::dirac(Vec::Zero(2));
  Vec target(2);
  target << 3.0, 4.0;
  const auto d34 = DiscreteMeasure::dirac(target);
  CHECK(wasserstein_lp(d0, d0, 1.0) == doctest::Approx(0.0));
  CHECK(wasserstein_lp(d0, d34, 2.0) == doctest::Approx(5.0));
  CHECK_THROWS_AS(wasserstein_lp(d0, DiscreteMeasure::dirac(Vec::Zero(1)), 1.0),
                  std::invalid_argument);
}

TEST_CASE("1-D agreement between quantile coupling and the LP") {
  CounterRng rng(CounterRng::derive_key(2, StreamRole::Probe));
  for (int trial = 0; trial < 100; ++trial) {
    const auto mu = cloud(rng, 5);
    const auto nu = cloud(rng, 5);
    for (double q : {1.0, 2.0}) {
      const double a = wasserstein_1d(mu, nu, q);
      const double b = wasserstein_lp(mu, nu, q);
      CHECK(std::abs(a - b) <= 1e-9);
    }
  }
}

TEST_CASE("metric axioms on random atom sets") {
  CounterRng rng(CounterRng::derive_key(3, StreamRole::Probe));
  for (int trial = 0; trial < 40; ++trial) {
    const auto mu = cloud(rng, 4 + trial % 3);
    const auto nu = cloud(rng, 3 + trial % 4);
    const auto rho = cloud(rng, 5);
    for (double q : {1.0, 2.0}) {
      const double ab = wasserstein_lp(mu, nu, q);
      const double ba = wasserstein_lp(nu, mu, q);
      CHECK(std::abs(ab - ba) <= 1e-9);  // symmetry
      const double ac = wasserstein_lp(mu, rho, q);
      const double cb = wasserstein_lp(rho, nu, q);
      CHECK(ab <= ac + cb + 1e-9);  // triangle
    }
    // identity of indiscernibles after atom merging
    Mat dup(1, 2);
    dup << 0.7, 0.7;
    const DiscreteMeasure split(dup, Vec::Constant(2, 0.5));
    const auto merged = split.merged();
    CHECK(merged.size() == 1);
    CHECK(wasserstein_lp(split, merged, 1.0) <= 1e-12);
  }
}

TEST_CASE("W_q monotone in q") {
  CounterRng rng(CounterRng::derive_key(4, StreamRole::Probe));
  for (int trial = 0; trial < 30; ++trial) {
    const auto mu = cloud(rng, 5);
    const auto nu = cloud(rng, 5);
    CHECK(wasserstein_lp(mu, nu, 1.0) <= wasserstein_lp(mu, nu, 2.0) + 1e-9);
  }
}

TEST_CASE("moment ball membership and Markov mass bound") {
  const MomentBall ball(1.0, 2.0, 4.0);
  CHECK(in_moment_ball(DiscreteMeasure::dirac(Vec::Zero(3)), ball));
  CHECK_FALSE(in_moment_ball(DiscreteMeasure::dirac(scalar(3.0)), ball));

  Mat pm(1, 2);
  pm << 1.0, -1.0;
  CHECK(in_moment_ball(DiscreteMeasure(pm, Vec::Constant(2, 0.5)),
                       MomentBall(1.0, 2.0, 1.0)));

  CHECK_THROWS_AS(MomentBall(2.0, 1.0, 1.0), std::invalid_argument);

  // mass outside radius R is at most K / R^2, exactly on atoms
  CounterRng rng(CounterRng::derive_key(5, StreamRole::Probe));
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = cloud(rng, 8);
    const double k2 = moment(mu, 2.0);
    for (double radius : {0.5, 1.0, 2.0}) {
      double outside = 0.0;
      for (int a = 0; a < mu.size(); ++a)
        if (mu.point(a).norm() > radius) outside += mu.weight(a);
      CHECK(outside <= k2 / (radius * radius) + 1e-12);
    }
  }
}

TEST_CASE("empirical_of and the law of large numbers") {
  CHECK(DiscreteMeasure::empirical({scalar(0.0)}).size() == 1);
  const auto two = DiscreteMeasure::empirical({scalar(0.0), scalar(2.0)});
  CHECK(two.weight(0) == doctest::Approx(0.5));

  CounterRng rng(CounterRng::derive_key(6, StreamRole::Probe));
  std::vector<Vec> draws;
  draws.reserve(10000);
  for (int k = 0; k < 10000; ++k) draws.push_back(scalar(rng.normal()));
  const auto emp = DiscreteMeasure::empirical(draws);
  CHECK(std::abs(moment(emp, 2.0) - 1.0) < 0.05);
}

TEST_CASE("moments are lower semicontinuous along the truncation schedule") {
  CounterRng rng(CounterRng::derive_key(7, StreamRole::Probe));
  const auto mu = cloud(rng, 30, 3.0);
  const double limit = moment(mu, 2.0);
  double prev = 0.0;
  for (double radius : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    // truncation: atoms beyond the radius collapse to the origin (xi 1_{|xi|<=k})
    Mat pts = mu.points();
    for (int k = 0; k < mu.size(); ++k)
      if (pts.col(k).norm() > radius) pts.col(k).setZero();
    const DiscreteMeasure truncated(pts, mu.weights());
    const double mk = moment(truncated, 2.0);
    CHECK(mk >= prev - 1e-12);   // monotone approach from below
    CHECK(mk <= limit + 1e-12);  // liminf M_p(mu_k) >= M_p(limit) with equality here
    prev = mk;
  }
  CHECK(prev == doctest::Approx(limit));
}

TEST_CASE("json and csv round trips") {
  CounterRng rng(CounterRng::derive_key(8, StreamRole::Probe));
  const auto mu = cloud(rng, 5);
  const auto back = DiscreteMeasure::from_json(mu.to_json());
  CHECK(back.dim() == mu.dim());
  CHECK(back.size() == mu.size());
  for (int k = 0; k < mu.size(); ++k) {
    CHECK(back.points()(0, k) == mu.points()(0, k));
    CHECK(back.weight(k) == mu.weight(k));
  }
  const auto csv = mu.to_csv();
  CHECK(csv.rfind("x1,weight\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == mu.size() + 1);
}
