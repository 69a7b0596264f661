#include "mfc/particle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mfc/parallel.hpp"
#include "mfc/rng.hpp"

namespace mfc {

NoiseBundle::NoiseBundle(double t0, double t1, int n_steps, int n_scenarios,
                         int n_particles, int d, std::uint64_t common_seed,
                         std::uint64_t idio_seed)
    : t0_(t0),
      t1_(t1),
      dt_((t1 - t0) / n_steps),
      n_steps_(n_steps),
      n_scenarios_(n_scenarios),
      n_particles_(n_particles),
      d_(d),
      common_seed_(common_seed),
      idio_seed_(idio_seed) {
  if (!(t1 > t0)) throw std::invalid_argument("NoiseBundle: t1 must exceed t0");
  if (n_steps < 1 || n_scenarios < 1 || n_particles < 1 || d < 1)
    throw std::invalid_argument("NoiseBundle: positive sizes required");

  const double sd = std::sqrt(dt_);
  common_.resize(static_cast<std::size_t>(n_scenarios) * n_steps * d);
  idio_w_.resize(static_cast<std::size_t>(n_scenarios) * n_particles * n_steps * d);
  idio_b_.resize(idio_w_.size());

  for (int s = 0; s < n_scenarios; ++s) {
    CounterRng rng(CounterRng::derive_key(common_seed, StreamRole::Common, s));
    double* out = &common_[static_cast<std::size_t>(s) * n_steps * d];
    for (int k = 0; k < n_steps * d; ++k) out[k] = sd * rng.normal();
    for (int p = 0; p < n_particles; ++p) {
      CounterRng rw(CounterRng::derive_key(idio_seed, StreamRole::IdioW, s, p));
      CounterRng rb(CounterRng::derive_key(idio_seed, StreamRole::IdioB, s, p));
      double* w = &idio_w_[(static_cast<std::size_t>(s) * n_particles + p) *
                           n_steps * d];
      double* b = &idio_b_[(static_cast<std::size_t>(s) * n_particles + p) *
                           n_steps * d];
      for (int k = 0; k < n_steps * d; ++k) {
        w[k] = sd * rw.normal();
        b[k] = sd * rb.normal();
      }
    }
  }

  // Pooled variance of all increments against dt (3-sigma normal-theory band).
  double sum = 0.0, sumsq = 0.0;
  std::size_t count = 0;
  auto absorb = [&](const std::vector<double>& v) {
    for (double x : v) {
      sum += x;
      sumsq += x * x;
    }
    count += v.size();
  };
  absorb(common_);
  absorb(idio_w_);
  absorb(idio_b_);
  if (count >= 8) {
    const double mean = sum / count;
    const double var = sumsq / count - mean * mean;
    const double band = 3.0 * dt_ * std::sqrt(2.0 / (count - 1.0));
    variance_stat_ = var;
    variance_ok_ = std::abs(var - dt_) <= band;
  }
}

Eigen::Map<const Vec> NoiseBundle::dW0(int scenario, int step) const {
  return {&common_[(static_cast<std::size_t>(scenario) * n_steps_ + step) * d_],
          d_};
}

Eigen::Map<const Vec> NoiseBundle::dW(int scenario, int particle,
                                      int step) const {
  return {&idio_w_[((static_cast<std::size_t>(scenario) * n_particles_ +
                     particle) * n_steps_ + step) * d_],
          d_};
}

Eigen::Map<const Vec> NoiseBundle::dB(int scenario, int particle,
                                      int step) const {
  return {&idio_b_[((static_cast<std::size_t>(scenario) * n_particles_ +
                     particle) * n_steps_ + step) * d_],
          d_};
}

ControlPolicy ControlPolicy::constant(Vec a) {
  ControlPolicy pol;
  pol.kind_ = Kind::Constant;
  pol.constant_ = std::move(a);
  std::ostringstream label;
  label << "constant[" << pol.constant_.transpose() << "]";
  pol.label_ = label.str();
  return pol;
}

ControlPolicy ControlPolicy::feedback(FeedbackFn fn, std::string label) {
  ControlPolicy pol;
  pol.kind_ = Kind::Feedback;
  pol.feedback_ = std::move(fn);
  pol.label_ = std::move(label);
  return pol;
}

ControlPolicy ControlPolicy::open_loop(std::vector<Vec> table) {
  ControlPolicy pol;
  pol.kind_ = Kind::OpenLoop;
  pol.table_ = std::move(table);
  pol.label_ = "open-loop[" + std::to_string(pol.table_.size()) + "]";
  return pol;
}

Vec ControlPolicy::action(const ProblemSpec& p, double t, int step, const Vec& x,
                          const DiscreteMeasure& mu) const {
  Vec a;
  switch (kind_) {
    case Kind::Constant:
      a = constant_;
      break;
    case Kind::Feedback:
      a = feedback_(t, x, mu);
      break;
    case Kind::OpenLoop:
      if (step < 0 || step >= static_cast<int>(table_.size()))
        throw std::invalid_argument("open-loop policy: step out of range");
      a = table_[step];
      break;
  }
  for (const auto& candidate : p.control_set)
    if ((candidate - a).norm() <= 1e-12) return a;
  throw std::invalid_argument(
      "ControlPolicy: emitted action is not a member of the control grid");
}

PathBundle::PathBundle(double t0, double dt, int n_steps, int n_scenarios,
                       int n_particles, int d, Vec particle_weights,
                       std::string policy, double eps)
    : t0_(t0),
      dt_(dt),
      n_steps_(n_steps),
      n_scenarios_(n_scenarios),
      n_particles_(n_particles),
      d_(d),
      eps_(eps),
      policy_(std::move(policy)),
      weights_(std::move(particle_weights)),
      data_(static_cast<std::size_t>(n_scenarios) * n_particles *
            (n_steps + 1) * d) {}

Eigen::Map<Vec> PathBundle::state(int scenario, int particle, int step) {
  return {&data_[((static_cast<std::size_t>(scenario) * n_particles_ +
                   particle) * (n_steps_ + 1) + step) * d_],
          d_};
}

Eigen::Map<const Vec> PathBundle::state(int scenario, int particle,
                                        int step) const {
  return {&data_[((static_cast<std::size_t>(scenario) * n_particles_ +
                   particle) * (n_steps_ + 1) + step) * d_],
          d_};
}

DiscreteMeasure PathBundle::conditional_measure(int scenario, int step) const {
  Mat pts(d_, n_particles_);
  for (int p = 0; p < n_particles_; ++p) pts.col(p) = state(scenario, p, step);
  return DiscreteMeasure(std::move(pts), weights_);
}

std::string PathBundle::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "scenario,particle,step,time";
  for (int c = 0; c < d_; ++c) out << ",x" << c + 1;
  out << "\n";
  for (int s = 0; s < n_scenarios_; ++s)
    for (int p = 0; p < n_particles_; ++p)
      for (int k = 0; k <= n_steps_; ++k) {
        out << s << "," << p << "," << k << "," << time_at(k);
        const auto x = state(s, p, k);
        for (int c = 0; c < d_; ++c) out << "," << x[c];
        out << "\n";
      }
  return out.str();
}

namespace {

void check_finite(const Eigen::Map<Vec>& x, int step) {
  if (!x.allFinite())
    throw NumericalAbort("simulation diverged to a non-finite state", step);
}

}  // namespace

PathBundle simulate_mean_field(const ProblemSpec& p, const DiscreteMeasure& init,
                               const ControlPolicy& policy,
                               const SimulationConfig& cfg) {
  p.validate();
  if (!(cfg.t0 < p.T))
    throw std::invalid_argument("simulate_mean_field: t0 must lie before T");
  if (init.dim() != p.d)
    throw std::invalid_argument("simulate_mean_field: init dimension mismatch");
  if (cfg.eps < 0.0)
    throw std::invalid_argument("simulate_mean_field: eps must be >= 0");

  const bool atoms_as_copies = cfg.n_copies == 0;
  const int copies = atoms_as_copies ? init.size() : cfg.n_copies;
  if (!p.mu_independent && copies < 2)
    throw std::invalid_argument(
        "simulate_mean_field: measure-dependent coefficients need at least 2 "
        "copies to carry the conditional law");

  const double t1 = cfg.t1 > 0.0 ? cfg.t1 : p.T;
  if (!(t1 > cfg.t0) || t1 > p.T + 1e-12)
    throw std::invalid_argument("simulate_mean_field: bad horizon t1");
  NoiseBundle noise(cfg.t0, t1, cfg.n_steps, cfg.n_common, copies, p.d,
                    cfg.common_seed, cfg.idio_seed);
  Vec weights = atoms_as_copies ? init.weights()
                                : Vec::Constant(copies, 1.0 / copies);
  PathBundle paths(cfg.t0, noise.dt(), cfg.n_steps, cfg.n_common, copies, p.d,
                   std::move(weights), policy.label(), cfg.eps);

  parallel_for(0, cfg.n_common, cfg.jobs, [&](int s) {
    // Initial copies: the atoms themselves, or iid draws from init.
    for (int c = 0; c < copies; ++c) {
      if (atoms_as_copies) {
        paths.state(s, c, 0) = init.point(c);
      } else {
        CounterRng rng(
            CounterRng::derive_key(cfg.idio_seed, StreamRole::Init, s, c));
        const double u = rng.uniform();
        double acc = 0.0;
        int pick = init.size() - 1;
        for (int k = 0; k < init.size(); ++k) {
          acc += init.weight(k);
          if (u < acc) {
            pick = k;
            break;
          }
        }
        paths.state(s, c, 0) = init.point(pick);
      }
    }

    Mat scratch(p.d, copies);
    for (int k = 0; k < cfg.n_steps; ++k) {
      const double t = paths.time_at(k);
      for (int c = 0; c < copies; ++c) scratch.col(c) = paths.state(s, c, k);
      const DiscreteMeasure law(scratch, paths.particle_weights());
      for (int c = 0; c < copies; ++c) {
        const Vec x = paths.state(s, c, k);
        const Vec a = policy.action(p, t, k, x, law);
        Vec next = x + p.b(t, x, law, a) * noise.dt() +
                   p.sigma(t, x, a) * noise.dW(s, c, k) +
                   p.sigma0(t, x) * noise.dW0(s, k);
        if (cfg.eps > 0.0) next += cfg.eps * noise.dB(s, c, k);
        paths.state(s, c, k + 1) = next;
        check_finite(paths.state(s, c, k + 1), k);
      }
    }
  });
  return paths;
}

PathBundle simulate_mollified_particles(const MollifiedCoefficients& mc,
                                        double t0, const Vec& xbar0,
                                        const std::vector<ControlPolicy>& policies,
                                        const SimulationConfig& cfg) {
  const ProblemSpec& p = mc.problem();
  const int n = mc.n();
  if (static_cast<int>(policies.size()) != n)
    throw std::invalid_argument(
        "simulate_mollified_particles: one policy per particle required");
  if (xbar0.size() != n * p.d)
    throw std::invalid_argument(
        "simulate_mollified_particles: initial state must lie in R^{dn}");
  if (!(t0 < p.T))
    throw std::invalid_argument("simulate_mollified_particles: t0 before T");

  const double t1 = cfg.t1 > 0.0 ? cfg.t1 : p.T;
  NoiseBundle noise(t0, t1, cfg.n_steps, cfg.n_common, n, p.d,
                    cfg.common_seed, cfg.idio_seed);
  PathBundle paths(t0, noise.dt(), cfg.n_steps, cfg.n_common, n, p.d,
                   Vec::Constant(n, 1.0 / n), "n-particle", cfg.eps);

  parallel_for(0, cfg.n_common, cfg.jobs, [&](int s) {
    for (int i = 0; i < n; ++i)
      paths.state(s, i, 0) = xbar0.segment(i * p.d, p.d);
    Vec xbar(n * p.d);
    for (int k = 0; k < cfg.n_steps; ++k) {
      const double t = paths.time_at(k);
      for (int i = 0; i < n; ++i)
        xbar.segment(i * p.d, p.d) = paths.state(s, i, k);
      const DiscreteMeasure law = paths.conditional_measure(s, k);
      for (int i = 0; i < n; ++i) {
        const Vec x = xbar.segment(i * p.d, p.d);
        const Vec a = policies[i].action(p, t, k, x, law);
        Vec next = x + mc.b_i(i, t, xbar, a) * noise.dt() +
                   p.sigma(t, x, a) * noise.dW(s, i, k) +
                   p.sigma0(t, x) * noise.dW0(s, k);
        if (cfg.eps > 0.0) next += cfg.eps * noise.dB(s, i, k);
        paths.state(s, i, k + 1) = next;
        check_finite(paths.state(s, i, k + 1), k);
      }
    }
  });
  return paths;
}

std::string MomentBoundReport::to_json() const {
  nlohmann::json j;
  j["second_moment_constant"] = second_moment_constant;
  j["stability_constant"] = stability_constant;
  j["sup_increment_slope"] = sup_increment_slope;
  j["endpoint_increment_slope"] = endpoint_increment_slope;
  j["h_values"] = h_values;
  j["sup_increments"] = sup_increments;
  j["endpoint_increments"] = endpoint_increments;
  return j.dump(2);
}

MomentBoundReport moment_bound_probe(const ProblemSpec& p,
                                     const std::vector<DiscreteMeasure>& inits,
                                     const ControlPolicy& policy,
                                     const std::vector<double>& h_list,
                                     const SimulationConfig& cfg) {
  if (inits.empty())
    throw std::invalid_argument("moment_bound_probe: needs initial measures");
  MomentBoundReport rep;

  auto mean_sup_sq = [](const PathBundle& b, int last_step) {
    double acc = 0.0;
    for (int s = 0; s < b.n_scenarios(); ++s)
      for (int c = 0; c < b.n_particles(); ++c) {
        double peak = 0.0;
        for (int k = 0; k <= last_step; ++k)
          peak = std::max(peak, b.state(s, c, k).squaredNorm());
        acc += b.particle_weights()[c] * peak;
      }
    return acc / b.n_scenarios();
  };

  // (i) second moment bound
  for (const auto& init : inits) {
    const auto paths = simulate_mean_field(p, init, policy, cfg);
    const double lhs = mean_sup_sq(paths, paths.n_steps());
    rep.second_moment_constant =
        std::max(rep.second_moment_constant, lhs / (1.0 + moment(init, 2.0)));
  }

  // (ii) stability under synchronous coupling: shift every atom, reuse seeds.
  {
    const auto& init = inits.front();
    Vec shift = Vec::Constant(p.d, 0.25);
    Mat shifted_pts = init.points();
    shifted_pts.colwise() += shift;
    const DiscreteMeasure init2(shifted_pts, init.weights());
    const auto a = simulate_mean_field(p, init, policy, cfg);
    const auto b = simulate_mean_field(p, init2, policy, cfg);
    double lhs = 0.0;
    for (int s = 0; s < a.n_scenarios(); ++s)
      for (int c = 0; c < a.n_particles(); ++c) {
        double peak = 0.0;
        for (int k = 0; k <= a.n_steps(); ++k)
          peak = std::max(peak,
                          (a.state(s, c, k) - b.state(s, c, k)).squaredNorm());
        lhs += a.particle_weights()[c] * peak;
      }
    lhs /= a.n_scenarios();
    rep.stability_constant = lhs / shift.squaredNorm();
  }

  // (iii) increment bound over [t0, t0+h]
  for (double h : h_list) {
    SimulationConfig c2 = cfg;
    const auto paths = simulate_mean_field(p, inits.front(), policy, c2);
    const int last =
        std::min(paths.n_steps(),
                 static_cast<int>(std::round(h / paths.dt())));
    double sup_acc = 0.0, end_acc = 0.0;
    for (int s = 0; s < paths.n_scenarios(); ++s)
      for (int c = 0; c < paths.n_particles(); ++c) {
        double peak = 0.0;
        for (int k = 0; k <= last; ++k)
          peak = std::max(peak, (paths.state(s, c, k) - paths.state(s, c, 0))
                                    .squaredNorm());
        sup_acc += paths.particle_weights()[c] * peak;
        end_acc += paths.particle_weights()[c] *
                   (paths.state(s, c, last) - paths.state(s, c, 0)).squaredNorm();
      }
    rep.h_values.push_back(last * paths.dt());
    rep.sup_increments.push_back(sup_acc / paths.n_scenarios());
    rep.endpoint_increments.push_back(end_acc / paths.n_scenarios());
  }
  double num_sup = 0.0, num_end = 0.0, den = 0.0;
  for (std::size_t k = 0; k < rep.h_values.size(); ++k) {
    num_sup += rep.h_values[k] * rep.sup_increments[k];
    num_end += rep.h_values[k] * rep.endpoint_increments[k];
    den += rep.h_values[k] * rep.h_values[k];
  }
  if (den > 0.0) {
    rep.sup_increment_slope = num_sup / den;
    rep.endpoint_increment_slope = num_end / den;
  }
  return rep;
}

}  // namespace mfc
