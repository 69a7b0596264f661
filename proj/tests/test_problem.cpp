#include <doctest.h>

#include <cmath>

#include "mfc/benchmarks.hpp"
#include "mfc/problem.hpp"

using namespace mfc;

namespace {

ProblemSpec zero_problem() {
  ProblemSpec p;
  p.name = "zero";
  p.d = 1;
  p.T = 1.0;
  Vec a0(1);
  a0 << 0.0;
  p.control_set = {a0};
  p.K = 1.0;
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
  p.g = [](const Vec&, const DiscreteMeasure&) { return 0.0; };
  return p;
}

}  // namespace

TEST_CASE("registry carries the three benchmarks and rejects strangers") {
  for (const auto& name : benchmark_names()) {
    const auto p = make_benchmark(name);
    CHECK(p.name == name);
    CHECK_NOTHROW(p.validate());
  }
  CHECK_THROWS_AS(make_benchmark("linear-quadratic"), std::invalid_argument);
}

TEST_CASE("structural invariants are enforced") {
  auto p = zero_problem();
  p.rho = 1.0;  // the admissibility contract requires rho < 1 strictly
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("rho"),
                       std::invalid_argument);
  p = zero_problem();
  p.control_set.clear();
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = zero_problem();
  p.beta = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("assumption A audit: zero coefficients pass with zero ratios") {
  const auto rep = audit_assumption_a(zero_problem(), 99, 200);
  CHECK(rep.pass());
  for (const auto& c : rep.conditions) CHECK(c.worst_ratio <= 1e-12);
  CHECK(rep.to_json().find("\"pass\"") != std::string::npos);
}

TEST_CASE("assumption A audit: linear drift beats a sublinear growth claim") {
  auto p = zero_problem();
  p.b = [](double, const Vec& x, const DiscreteMeasure&, const Vec&) {
    return Vec(x);
  };
  p.rho = 0.5;
  const auto rep = audit_assumption_a(p, 3, 400);
  CHECK_FALSE(rep.pass());
  // the growth condition must be the one that broke
  bool growth_failed = false;
  for (const auto& c : rep.conditions)
    if (c.condition.find("growth") != std::string::npos && !c.pass)
      growth_failed = true;
  CHECK(growth_failed);
}

TEST_CASE("assumption A audit: the shipped benchmarks pass") {
  for (const auto& name : benchmark_names()) {
    const auto rep = audit_assumption_a(make_benchmark(name), 7, 400);
    INFO(name);
    CHECK(rep.pass());
  }
}

TEST_CASE("audit is deterministic given the seed") {
  const auto p = make_benchmark("mean-reverting-mf");
  const auto a = audit_assumption_a(p, 42, 150);
  const auto b = audit_assumption_a(p, 42, 150);
  for (std::size_t k = 0; k < a.conditions.size(); ++k)
    CHECK(a.conditions[k].worst_ratio == b.conditions[k].worst_ratio);
}

TEST_CASE("assumption B audit: constant, bounded and violating volatilities") {
  auto p = zero_problem();
  auto repc = audit_assumption_b(p, 1e-4, 100);
  CHECK(repc.pass());
  CHECK(repc.conditions.front().worst_ratio <= 1e-9);

  p.sigma = [](double, const Vec& x, const Vec&) {
    Mat s(1, 1);
    s(0, 0) = std::sin(x[0]);
    return s;
  };
  CHECK(audit_assumption_b(p, 1e-4, 200).pass());

  p.sigma = [](double, const Vec& x, const Vec&) {
    Mat s(1, 1);
    s(0, 0) = x[0] * x[0];
    return s;
  };
  CHECK_FALSE(audit_assumption_b(p, 1e-4, 200).pass());

  for (const auto& name : benchmark_names())
    CHECK(audit_assumption_b(make_benchmark(name), 1e-4, 200).pass());
}

TEST_CASE("audit records callables that throw") {
  auto p = zero_problem();
  p.f = [](double, const Vec& x, const DiscreteMeasure&, const Vec&) -> double {
    if (x[0] > 0.0) throw std::runtime_error("boom");
    return 0.0;
  };
  const auto rep = audit_assumption_a(p, 5, 100);
  CHECK_FALSE(rep.pass());
  CHECK_FALSE(rep.failures.empty());
  CHECK(rep.failures.front().find("boom") != std::string::npos);
}
