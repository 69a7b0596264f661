#include "mfc/problem.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mfc/parallel.hpp"
#include "mfc/rng.hpp"

namespace mfc {

void ProblemSpec::validate() const {
  if (d <= 0) throw std::invalid_argument(name + ": d must be positive");
  if (!(T > 0.0)) throw std::invalid_argument(name + ": T must be positive");
  if (!(rho >= 0.0 && rho < 1.0))
    throw std::invalid_argument(name + ": requires rho in [0,1)");
  if (!(beta > 0.0 && beta <= 1.0))
    throw std::invalid_argument(name + ": requires beta in (0,1]");
  if (K < 0.0) throw std::invalid_argument(name + ": requires K >= 0");
  if (control_set.empty())
    throw std::invalid_argument(name + ": control set must be nonempty");
  for (const auto& a : control_set)
    if (a.size() != d)
      throw std::invalid_argument(name + ": control grid dimension mismatch");
  if (!b || !sigma || !sigma0 || !f || !g)
    throw std::invalid_argument(name + ": missing coefficient callable");
}

bool AssumptionReport::pass() const {
  if (!failures.empty()) return false;
  for (const auto& c : conditions)
    if (!c.pass) return false;
  return true;
}

std::string AssumptionReport::to_json() const {
  nlohmann::json j;
  j["assumption"] = assumption;
  j["problem"] = problem;
  j["seed"] = seed;
  j["samples"] = samples;
  j["tolerance"] = tolerance;
  j["pass"] = pass();
  j["note"] =
      "sampling-based audit: a pass is evidence of admissibility, not proof";
  auto arr = nlohmann::json::array();
  for (const auto& c : conditions) {
    arr.push_back({{"condition", c.condition},
                   {"worst_ratio", c.worst_ratio},
                   {"samples", c.samples},
                   {"pass", c.pass},
                   {"worst_input", c.worst_input}});
  }
  j["conditions"] = std::move(arr);
  j["failures"] = failures;
  return j.dump(2);
}

namespace {

DiscreteMeasure random_cloud(CounterRng& rng, int d, double spread) {
  const int atoms = 3 + static_cast<int>(rng.uniform() * 4.0);
  Mat pts(d, atoms);
  for (int k = 0; k < atoms; ++k)
    for (int c = 0; c < d; ++c) pts(c, k) = spread * rng.normal();
  Vec w = Vec::Constant(atoms, 1.0 / atoms);
  return DiscreteMeasure(std::move(pts), std::move(w));
}

std::string describe(double t, const Vec& x, const Vec& a) {
  std::ostringstream os;
  os << "t=" << t << " x=[" << x.transpose() << "] a=[" << a.transpose() << "]";
  return os.str();
}

void track(ConditionStat& stat, double ratio, const std::string& input) {
  ++stat.samples;
  if (ratio > stat.worst_ratio) {
    stat.worst_ratio = ratio;
    stat.worst_input = input;
  }
}

}  // namespace

AssumptionReport audit_assumption_a(const ProblemSpec& p,
                                    std::uint64_t sampler_seed, int n_samples,
                                    double tolerance, int jobs) {
  if (n_samples < 1)
    throw std::invalid_argument("audit_assumption_a: n_samples >= 1 required");
  p.validate();

  AssumptionReport report;
  report.assumption = "A";
  report.problem = p.name;
  report.seed = sampler_seed;
  report.samples = n_samples;
  report.tolerance = tolerance;

  ConditionStat lip{"(1) joint Lipschitz in (x, t^beta, W1)", 0, 0, false, ""};
  ConditionStat growth{"(2) growth of b, sigma, sigma0", 0, 0, false, ""};
  ConditionStat bound{"(3) bound |f|+|g| <= K", 0, 0, false, ""};

  struct SampleStat {
    double lip = -1.0, growth = -1.0, bound = -1.0;
    std::string input;
    std::string failure;
  };
  std::vector<SampleStat> stats(n_samples);

  const double spread = 2.0;
  parallel_for(0, n_samples, jobs, [&](int s) {
    CounterRng rng(CounterRng::derive_key(sampler_seed, StreamRole::Audit, s));
    const double t = p.T * rng.uniform();
    const double t2 = p.T * rng.uniform();
    Vec x(p.d), x2(p.d);
    for (int c = 0; c < p.d; ++c) {
      x[c] = spread * rng.normal();
      x2[c] = spread * rng.normal();
    }
    const auto mu = random_cloud(rng, p.d, spread);
    const auto mu2 = random_cloud(rng, p.d, spread);
    const auto& a =
        p.control_set[static_cast<std::size_t>(rng.uniform() *
                                               p.control_set.size()) %
                      p.control_set.size()];
    auto& stat = stats[s];
    stat.input = describe(t, x, a);
    try {
      const double w1 = wasserstein_lp(mu, mu2, 1.0);
      const double denom =
          p.K * ((x - x2).norm() + std::pow(std::abs(t - t2), p.beta) + w1);
      const double numer = (p.b(t, x, mu, a) - p.b(t2, x2, mu2, a)).norm() +
                           (p.sigma(t, x, a) - p.sigma(t2, x2, a)).norm() +
                           (p.sigma0(t, x) - p.sigma0(t2, x2)).norm() +
                           std::abs(p.f(t, x, mu, a) - p.f(t2, x2, mu2, a)) +
                           std::abs(p.g(x, mu) - p.g(x2, mu2));
      if (denom > 1e-6) stat.lip = numer / denom;

      const double gden = p.K * (1.0 + std::pow(x.norm(), p.rho));
      stat.growth = (p.b(t, x, mu, a).norm() + p.sigma(t, x, a).norm() +
                     p.sigma0(t, x).norm()) /
                    gden;
      stat.bound =
          (std::abs(p.f(t, x, mu, a)) + std::abs(p.g(x, mu))) / p.K;
    } catch (const std::exception& e) {
      stat.failure = std::string("callable raised: ") + e.what() + " at " +
                     stat.input;
    }
  });

  for (const auto& stat : stats) {
    if (!stat.failure.empty()) {
      report.failures.push_back(stat.failure);
      continue;
    }
    if (stat.lip >= 0.0) track(lip, stat.lip, stat.input);
    track(growth, stat.growth, stat.input);
    track(bound, stat.bound, stat.input);
  }

  for (auto* c : {&lip, &growth, &bound}) c->pass = c->worst_ratio <= 1.0 + tolerance;
  report.conditions = {lip, growth, bound};
  return report;
}

AssumptionReport audit_assumption_b(const ProblemSpec& p, double fd_step,
                                    int n_samples, double tolerance,
                                    std::uint64_t sampler_seed, int jobs) {
  if (!(fd_step > 0.0))
    throw std::invalid_argument("audit_assumption_b: fd_step must be > 0");
  p.validate();

  AssumptionReport report;
  report.assumption = "B";
  report.problem = p.name;
  report.seed = sampler_seed;
  report.samples = n_samples;
  report.tolerance = tolerance;

  ConditionStat deriv{"derivative bounds of sigma and sigma0", 0, 0, false, ""};
  ConditionStat sum_diag{
      "diagnostic: summed derivative magnitudes over K (not gating)", 0, 0,
      false, ""};

  struct SampleStat {
    double worst = -1.0, sum = -1.0;
    std::string input;
    std::string failure;
  };
  std::vector<SampleStat> stats(n_samples);

  const double spread = 2.0;
  const double h = fd_step;
  parallel_for(0, n_samples, jobs, [&](int s) {
    CounterRng rng(
        CounterRng::derive_key(sampler_seed, StreamRole::Audit, s, 1));
    const double t =
        h + (p.T - 2.0 * h) * rng.uniform();  // keep t +- h inside [0,T]
    Vec x(p.d);
    for (int c = 0; c < p.d; ++c) x[c] = spread * rng.normal();
    const auto& a =
        p.control_set[static_cast<std::size_t>(rng.uniform() *
                                               p.control_set.size()) %
                      p.control_set.size()];
    auto& stat = stats[s];
    stat.input = describe(t, x, a);
    try {
      auto dt_norm = [&](auto&& eval) {
        return ((eval(t + h) - eval(t - h)) / (2.0 * h)).norm();
      };
      auto dx_norms = [&](auto&& eval) {
        double first_sq = 0.0, second_sq = 0.0;
        for (int c = 0; c < p.d; ++c) {
          Vec e = Vec::Zero(p.d);
          e[c] = h;
          const Mat plus = eval(x + e), minus = eval(x - e), mid = eval(x);
          first_sq += std::pow(((plus - minus) / (2.0 * h)).norm(), 2);
          second_sq += std::pow(((plus - 2.0 * mid + minus) / (h * h)).norm(), 2);
        }
        return std::pair<double, double>(std::sqrt(first_sq),
                                         std::sqrt(second_sq));
      };

      const double st_t = dt_norm([&](double tt) { return p.sigma(tt, x, a); });
      const double s0_t = dt_norm([&](double tt) { return p.sigma0(tt, x); });
      const auto [st_x, st_xx] =
          dx_norms([&](const Vec& xx) { return p.sigma(t, xx, a); });
      const auto [s0_x, s0_xx] =
          dx_norms([&](const Vec& xx) { return p.sigma0(t, xx); });

      // Each derivative magnitude is held to K; the summed ratio is reported
      // as a diagnostic but does not gate the audit.
      stat.worst = std::max({st_t, st_x, st_xx, s0_t, s0_x, s0_xx}) / p.K;
      stat.sum = (st_t + st_x + st_xx + s0_t + s0_x + s0_xx) / p.K;
    } catch (const std::exception& e) {
      stat.failure = std::string("callable raised: ") + e.what() + " at " +
                     stat.input;
    }
  });

  for (const auto& stat : stats) {
    if (!stat.failure.empty()) {
      report.failures.push_back(stat.failure);
      continue;
    }
    track(deriv, stat.worst, stat.input);
    track(sum_diag, stat.sum, stat.input);
  }

  deriv.pass = deriv.worst_ratio <= 1.0 + tolerance;
  sum_diag.pass = true;  // reported, never gating
  report.conditions = {deriv, sum_diag};
  return report;
}

}  // namespace mfc
