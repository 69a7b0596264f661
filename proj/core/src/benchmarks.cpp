#include "mfc/benchmarks.hpp"

#include <cmath>
#include <stdexcept>

namespace mfc {

namespace {

std::vector<Vec> control_grid_1d(std::initializer_list<double> values) {
  std::vector<Vec> grid;
  for (double a : values) {
    Vec v(1);
    v[0] = a;
    grid.push_back(v);
  }
  return grid;
}

Mat zero_mat() { return Mat::Zero(1, 1); }

// Two equal peaks at +-1. Max slope 0.303, max value 0.25.
double two_peak(double x) {
  return 0.25 * (std::exp(-2.0 * (x - 1.0) * (x - 1.0)) +
                 std::exp(-2.0 * (x + 1.0) * (x + 1.0)));
}

ProblemSpec decoupled_bounded() {
  ProblemSpec p;
  p.name = "decoupled-bounded";
  p.d = 1;
  p.T = 1.0;
  p.control_set = control_grid_1d({-1.0, -0.5, 0.0, 0.5, 1.0});
  p.K = 1.0;
  p.rho = 0.5;
  p.beta = 1.0;
  p.mu_independent = true;
  p.time_invariant = true;

  p.b = [](double, const Vec&, const DiscreteMeasure&, const Vec& a) {
    Vec out(1);
    out[0] = 0.5 * a[0];
    return out;
  };
  p.sigma = [](double, const Vec&, const Vec&) { return zero_mat(); };
  p.sigma0 = [](double, const Vec&) { return zero_mat(); };
  p.f = [](double, const Vec& x, const DiscreteMeasure&, const Vec& a) {
    return 0.1 / (1.0 + x[0] * x[0]) - 0.05 * a[0] * a[0];
  };
  p.g = [](const Vec& x, const DiscreteMeasure&) { return two_peak(x[0]); };
  return p;
}

ProblemSpec mean_reverting_mf() {
  ProblemSpec p;
  p.name = "mean-reverting-mf";
  p.d = 1;
  p.T = 1.0;
  p.control_set = control_grid_1d({-1.0, -0.5, 0.0, 0.5, 1.0});
  p.K = 1.0;
  p.rho = 0.5;
  p.beta = 1.0;
  p.mu_independent = false;
  p.time_invariant = true;

  // Growth audit sums |b| + |sigma| + |sigma0| against K (1 + |x|^rho):
  // 0.5 + 0.25 + 0.2 = 0.95 < 1 at the worst point x = 0.
  p.b = [](double, const Vec& x, const DiscreteMeasure& mu, const Vec& a) {
    Vec out(1);
    out[0] = 0.3 * a[0] - 0.2 * std::tanh(x[0] - mu.mean()[0]);
    return out;
  };
  p.sigma = [](double, const Vec&, const Vec&) {
    Mat s(1, 1);
    s(0, 0) = 0.25;
    return s;
  };
  p.sigma0 = [](double, const Vec& x) {
    Mat s(1, 1);
    s(0, 0) = 0.15 + 0.05 * std::cos(x[0]);
    return s;
  };
  p.f = [](double, const Vec& x, const DiscreteMeasure& mu, const Vec& a) {
    return 0.2 / (1.0 + x[0] * x[0]) + 0.1 * std::tanh(mu.mean()[0]) -
           0.05 * a[0] * a[0];
  };
  p.g = [](const Vec& x, const DiscreteMeasure& mu) {
    return 0.25 * std::tanh(x[0]) + 0.1 * std::tanh(mu.mean()[0]);
  };
  return p;
}

ProblemSpec zero_cost() {
  ProblemSpec p = mean_reverting_mf();
  p.name = "zero-cost";
  p.f = [](double, const Vec&, const DiscreteMeasure&, const Vec&) {
    return 0.0;
  };
  p.g = [](const Vec&, const DiscreteMeasure&) { return 0.0; };
  return p;
}

}  // namespace

ProblemSpec make_benchmark(const std::string& name) {
  if (name == "decoupled-bounded") return decoupled_bounded();
  if (name == "mean-reverting-mf") return mean_reverting_mf();
  if (name == "zero-cost") return zero_cost();
  throw std::invalid_argument("unknown benchmark problem: " + name);
}

std::vector<std::string> benchmark_names() {
  return {"decoupled-bounded", "mean-reverting-mf", "zero-cost"};
}

ProblemSpec make_pure_common_noise(int d) {
  ProblemSpec p;
  p.name = "pure-common-noise";
  p.d = d;
  p.T = 1.0;
  Vec a0 = Vec::Zero(d);
  p.control_set = {a0};
  p.K = 1.0;
  p.rho = 0.5;
  p.beta = 1.0;
  p.mu_independent = true;
  p.time_invariant = true;
  p.b = [d](double, const Vec&, const DiscreteMeasure&, const Vec&) {
    return Vec(Vec::Zero(d));
  };
  p.sigma = [d](double, const Vec&, const Vec&) { return Mat(Mat::Zero(d, d)); };
  p.sigma0 = [d](double, const Vec&) { return Mat(Mat::Identity(d, d)); };
  p.f = [](double, const Vec&, const DiscreteMeasure&, const Vec&) {
    return 0.0;
  };
  p.g = [](const Vec&, const DiscreteMeasure&) { return 0.0; };
  return p;
}

ProblemSpec make_unit_running_reward(const ProblemSpec& base) {
  ProblemSpec p = base;
  p.name = base.name + "+unit-f";
  p.f = [](double, const Vec&, const DiscreteMeasure&, const Vec&) {
    return 1.0;
  };
  p.g = [](const Vec&, const DiscreteMeasure&) { return 0.0; };
  return p;
}

}  // namespace mfc
