#include "mfc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mfc/rng.hpp"

namespace mfc {

std::string digest_inputs(const std::string& canonical) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

std::string ProbeVerdict::to_json() const {
  nlohmann::json j;
  j["check"] = check;
  j["inputs_digest"] = inputs_digest;
  j["statistic"] = statistic;
  j["tolerance"] = tolerance;
  j["pass"] = pass;
  return j.dump();
}

// ---------------------------------------------------------------------------

namespace {

DiscreteMeasure with_shifted_atom(const DiscreteMeasure& mu, int atom, int coord,
                                  double delta) {
  Mat pts = mu.points();
  pts(coord, atom) += delta;
  return DiscreteMeasure(std::move(pts), mu.weights());
}

DiscreteMeasure with_two_shifts(const DiscreteMeasure& mu, int a1, int c1,
                                double d1, int a2, int c2, double d2) {
  Mat pts = mu.points();
  pts(c1, a1) += d1;
  pts(c2, a2) += d2;
  return DiscreteMeasure(std::move(pts), mu.weights());
}

}  // namespace

LDerivReport l_derivative_fd_check(const CylindricalFunctional& u, double t,
                                   const DiscreteMeasure& mu, double fd_step) {
  if (!(fd_step > 0.0))
    throw std::invalid_argument("l_derivative_fd_check: fd_step > 0 required");
  const int d = mu.dim();
  const double h = fd_step;
  LDerivReport rep;
  rep.functional = u.name();
  rep.atoms_checked = mu.size();

  for (int k = 0; k < mu.size(); ++k) {
    const Vec expected = mu.weight(k) * u.dmu(t, mu, mu.point(k));
    for (int c = 0; c < d; ++c) {
      const double up = u.value(t, with_shifted_atom(mu, k, c, h));
      const double dn = u.value(t, with_shifted_atom(mu, k, c, -h));
      const double fd = (up - dn) / (2.0 * h);
      const double err = std::abs(fd - expected[c]);
      rep.max_abs_error = std::max(rep.max_abs_error, err);
      rep.max_rel_error =
          std::max(rep.max_rel_error, err / (1.0 + std::abs(expected[c])));
    }
  }

  // Second-order identity: d2 lift / dx_k dx_l =
  //   w_k w_l dmu2(x_k, x_l) + delta_{kl} ( w_k dx_dmu(x_k) ).
  const double u00 = u.value(t, mu);
  for (int k = 0; k < mu.size(); ++k)
    for (int l = k; l < mu.size(); ++l)
      for (int c1 = 0; c1 < d; ++c1)
        for (int c2 = 0; c2 < d; ++c2) {
          double fd;
          if (k == l && c1 == c2) {
            fd = (u.value(t, with_shifted_atom(mu, k, c1, h)) - 2.0 * u00 +
                  u.value(t, with_shifted_atom(mu, k, c1, -h))) /
                 (h * h);
          } else {
            fd = (u.value(t, with_two_shifts(mu, k, c1, h, l, c2, h)) -
                  u.value(t, with_two_shifts(mu, k, c1, h, l, c2, -h)) -
                  u.value(t, with_two_shifts(mu, k, c1, -h, l, c2, h)) +
                  u.value(t, with_two_shifts(mu, k, c1, -h, l, c2, -h))) /
                 (4.0 * h * h);
          }
          double expected = mu.weight(k) * mu.weight(l) *
                            u.dmu2(t, mu, mu.point(k), mu.point(l))(c1, c2);
          if (k == l)
            expected += mu.weight(k) * u.dx_dmu(t, mu, mu.point(k))(c1, c2);
          rep.max_second_error = std::max(
              rep.max_second_error,
              std::abs(fd - expected) / (1.0 + std::abs(expected)));
        }
  return rep;
}

ProbeVerdict LDerivReport::verdict(double tolerance) const {
  ProbeVerdict v;
  v.check = "l-derivative-fd:" + functional;
  v.inputs_digest = digest_inputs(functional + std::to_string(atoms_checked));
  v.statistic = std::max(max_rel_error, max_second_error);
  v.tolerance = tolerance;
  v.pass = v.statistic <= tolerance;
  return v;
}

// ---------------------------------------------------------------------------

double hjb_residual(const ProblemSpec& p, const MeasureFunctionalView& u,
                    double t, const DiscreteMeasure& mu) {
  double res = u.dt(t, mu);
  for (int k = 0; k < mu.size(); ++k) {
    const Vec x = mu.point(k);
    const Vec grad = u.dmu(t, mu, x);
    const Mat dxdmu = u.dx_dmu(t, mu, x);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& a : p.control_set) {
      const Mat s = p.sigma(t, x, a);
      const Mat s0 = p.sigma0(t, x);
      const Mat diff = s * s.transpose() + s0 * s0.transpose();
      const double val = p.f(t, x, mu, a) + p.b(t, x, mu, a).dot(grad) +
                         0.5 * (diff * dxdmu).trace();
      best = std::max(best, val);
    }
    res += mu.weight(k) * best;
  }
  for (int k = 0; k < mu.size(); ++k)
    for (int l = 0; l < mu.size(); ++l) {
      const Mat s0x = p.sigma0(t, mu.point(k));
      const Mat s0y = p.sigma0(t, mu.point(l));
      res += 0.5 * mu.weight(k) * mu.weight(l) *
             (s0x * s0y.transpose() *
              u.dmu2(t, mu, mu.point(k), mu.point(l)))
                 .trace();
    }
  return res;
}

double supersolution_residual(const ProblemSpec& p,
                              const MeasureFunctionalView& u, double t,
                              const DiscreteMeasure& nu) {
  const int d = p.d;
  if (nu.dim() != 2 * d)
    throw std::invalid_argument(
        "supersolution_residual: nu must carry stacked (x, a) atoms in R^{2d}");

  // Marginal on the state coordinates; coefficient arguments read it.
  Mat xpts(d, nu.size());
  for (int k = 0; k < nu.size(); ++k) xpts.col(k) = nu.point(k).head(d);
  const DiscreteMeasure mu(xpts, nu.weights());

  double res = u.dt(t, nu);
  for (int k = 0; k < nu.size(); ++k) {
    const Vec pair = nu.point(k);
    const Vec x = pair.head(d);
    const Vec a = pair.tail(d);
    const Vec grad = u.dmu(t, nu, pair).head(d);                 // pi_d
    const Mat dxdmu = u.dx_dmu(t, nu, pair).topLeftCorner(d, d); // pi_{dxd}
    const Mat s = p.sigma(t, x, a);
    const Mat s0 = p.sigma0(t, x);
    res += nu.weight(k) *
           (p.f(t, x, mu, a) + p.b(t, x, mu, a).dot(grad) +
            0.5 * ((s * s.transpose() + s0 * s0.transpose()) * dxdmu).trace());
  }
  for (int k = 0; k < nu.size(); ++k)
    for (int l = 0; l < nu.size(); ++l) {
      const Mat s0x = p.sigma0(t, nu.point(k).head(d));
      const Mat s0y = p.sigma0(t, nu.point(l).head(d));
      const Mat dmu2 =
          u.dmu2(t, nu, nu.point(k), nu.point(l)).topLeftCorner(d, d);
      res += 0.5 * nu.weight(k) * nu.weight(l) *
             (s0x * s0y.transpose() * dmu2).trace();
    }
  return res;
}

namespace {

// Iterates over tuples of atom indices with one or two slots pinned.
template <typename F>
void for_each_tuple(int n, int atoms, int pin_a, int pin_b, F&& fn) {
  std::vector<int> idx(n, 0);
  while (true) {
    fn(idx);
    int c = 0;
    while (c < n) {
      if (c == pin_a || c == pin_b) {
        ++c;
        continue;
      }
      if (++idx[c] < atoms) break;
      idx[c++] = 0;
    }
    if (c == n) break;
  }
}

}  // namespace

MeasureFunctionalView make_lifted_functional(const ValueGrid& vg) {
  const ValueGrid* grid = &vg;
  const int n = vg.n_particles();
  const int d = vg.dn() / n;

  auto tensor_weight = [](const DiscreteMeasure& mu, const std::vector<int>& idx,
                          int skip_a, int skip_b) {
    double w = 1.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (static_cast<int>(i) == skip_a || static_cast<int>(i) == skip_b)
        continue;
      w *= mu.weight(idx[i]);
    }
    return w;
  };
  auto check_budget = [n](const DiscreteMeasure& mu) {
    double tuples = 1.0;
    for (int i = 0; i < n; ++i) tuples *= mu.size();
    if (tuples > 1e6)
      throw std::invalid_argument(
          "lifted functional: atom tuple budget exceeded");
  };

  MeasureFunctionalView v;
  v.name = "lifted-value-grid";
  v.value = [grid, n, d, tensor_weight, check_budget](
                double t, const DiscreteMeasure& mu) {
    check_budget(mu);
    Vec xbar(n * d);
    double acc = 0.0;
    for_each_tuple(n, mu.size(), -1, -1, [&](const std::vector<int>& idx) {
      for (int i = 0; i < n; ++i) xbar.segment(i * d, d) = mu.point(idx[i]);
      acc += tensor_weight(mu, idx, -1, -1) * grid->value(t, xbar, true);
    });
    return acc;
  };
  v.dt = [grid, n, d, tensor_weight, check_budget](double t,
                                                   const DiscreteMeasure& mu) {
    check_budget(mu);
    Vec xbar(n * d);
    double acc = 0.0;
    for_each_tuple(n, mu.size(), -1, -1, [&](const std::vector<int>& idx) {
      for (int i = 0; i < n; ++i) xbar.segment(i * d, d) = mu.point(idx[i]);
      acc += tensor_weight(mu, idx, -1, -1) * grid->time_derivative(t, xbar);
    });
    return acc;
  };
  v.dmu = [grid, n, d, tensor_weight, check_budget](
              double t, const DiscreteMeasure& mu, const Vec& x) {
    check_budget(mu);
    Vec out = Vec::Zero(d);
    Vec xbar(n * d);
    for (int i = 0; i < n; ++i) {
      for_each_tuple(n, mu.size(), i, -1, [&](const std::vector<int>& idx) {
        for (int j = 0; j < n; ++j)
          xbar.segment(j * d, d) = j == i ? x : mu.point(idx[j]);
        out += tensor_weight(mu, idx, i, -1) *
               grid->grad_particle(t, xbar, i, d, true);
      });
    }
    return out;
  };
  v.dx_dmu = [grid, n, d, tensor_weight, check_budget](
                 double t, const DiscreteMeasure& mu, const Vec& x) {
    check_budget(mu);
    Mat out = Mat::Zero(d, d);
    Vec xbar(n * d);
    for (int i = 0; i < n; ++i) {
      for_each_tuple(n, mu.size(), i, -1, [&](const std::vector<int>& idx) {
        for (int j = 0; j < n; ++j)
          xbar.segment(j * d, d) = j == i ? x : mu.point(idx[j]);
        out += tensor_weight(mu, idx, i, -1) *
               grid->hess_particle(t, xbar, i, i, d, true);
      });
    }
    return out;
  };
  v.dmu2 = [grid, n, d, tensor_weight, check_budget](
               double t, const DiscreteMeasure& mu, const Vec& x, const Vec& y) {
    check_budget(mu);
    Mat out = Mat::Zero(d, d);
    Vec xbar(n * d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        for_each_tuple(n, mu.size(), i, j, [&](const std::vector<int>& idx) {
          for (int l = 0; l < n; ++l) {
            if (l == i)
              xbar.segment(l * d, d) = x;
            else if (l == j)
              xbar.segment(l * d, d) = y;
            else
              xbar.segment(l * d, d) = mu.point(idx[l]);
          }
          out += tensor_weight(mu, idx, i, j) *
                 grid->hess_particle(t, xbar, i, j, d, true);
        });
      }
    return out;
  };
  return v;
}

double particle_pde_residual(const ProblemSpec& p,
                             const MollifiedCoefficients& mc,
                             const ValueGrid& vg, double t,
                             const DiscreteMeasure& mu) {
  const int n = vg.n_particles();
  const int d = vg.dn() / n;
  const double eps = vg.spec().eps;
  const auto lifted = make_lifted_functional(vg);

  double res = lifted.dt(t, mu);
  Vec xbar(n * d);
  for_each_tuple(n, mu.size(), -1, -1, [&](const std::vector<int>& idx) {
    double w = 1.0;
    for (int i = 0; i < n; ++i) {
      w *= mu.weight(idx[i]);
      xbar.segment(i * d, d) = mu.point(idx[i]);
    }
    if (w == 0.0) return;
    double inner = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec xi = xbar.segment(i * d, d);
      const Vec grad = vg.grad_particle(t, xbar, i, d, true);
      const Mat hess = vg.hess_particle(t, xbar, i, i, d, true);
      const Mat s0 = p.sigma0(t, xi);
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& a : p.control_set) {
        const Mat s = p.sigma(t, xi, a);
        const Mat diff = s * s.transpose() + s0 * s0.transpose() +
                         eps * eps * Mat::Identity(d, d);
        const double val = mc.f_i(i, t, xbar, a) / n +
                           mc.b_i(i, t, xbar, a).dot(grad) +
                           0.5 * (diff * hess).trace();
        best = std::max(best, val);
      }
      inner += best;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const Mat s0j = p.sigma0(t, xbar.segment(j * d, d));
        inner += 0.5 * (s0 * s0j.transpose() *
                        vg.hess_particle(t, xbar, i, j, d, true))
                           .trace();
      }
    }
    res += w * inner;
  });
  return res;
}

// ---------------------------------------------------------------------------

std::string DppReport::to_json() const {
  nlohmann::json j;
  j["t"] = t;
  j["s"] = s;
  j["lhs"] = lhs;
  j["grid_budget"] = grid_budget;
  j["pass"] = pass;
  j["best_policy"] = best_policy;
  auto arr = nlohmann::json::array();
  for (const auto& pr : policies)
    arr.push_back({{"policy", pr.policy},
                   {"rhs", pr.rhs},
                   {"std_error", pr.std_error},
                   {"gap", pr.gap}});
  j["policies"] = arr;
  j["note"] =
      "one-sided: the sup over all admissible controls is not searchable "
      "with finite policy families";
  return j.dump(2);
}

ProbeVerdict DppReport::verdict() const {
  ProbeVerdict v;
  v.check = "dpp-one-sided";
  v.inputs_digest =
      digest_inputs(std::to_string(t) + "|" + std::to_string(s) + "|" +
                    std::to_string(policies.size()));
  double worst = 0.0;
  for (const auto& pr : policies) worst = std::min(worst, pr.gap);
  v.statistic = worst;
  v.tolerance = grid_budget;
  v.pass = pass;
  return v;
}

DppReport dpp_probe(const ProblemSpec& p, const ValueGrid& vg, double t,
                    const DiscreteMeasure& mu, double s,
                    const std::vector<ControlPolicy>& policies,
                    const SimulationConfig& sim, double grid_budget,
                    const LiftEstimatorConfig& lift_cfg) {
  if (!(s >= t && s <= p.T + 1e-12))
    throw std::invalid_argument("dpp_probe: requires t <= s <= T");

  DppReport rep;
  rep.t = t;
  rep.s = s;
  rep.grid_budget = grid_budget;

  LiftEstimatorConfig cond_lift = lift_cfg;
  cond_lift.interpolate_time = true;
  rep.lhs = lift(vg, t, mu, cond_lift).value;

  for (const auto& policy : policies) {
    DppPolicyResult pr;
    pr.policy = policy.label();
    if (s <= t + 1e-12) {
      pr.rhs = rep.lhs;
      pr.gap = 0.0;
      rep.policies.push_back(pr);
      continue;
    }
    SimulationConfig c = sim;
    c.t0 = t;
    c.t1 = s;
    const PathBundle paths = simulate_mean_field(p, mu, policy, c);
    const double dt = paths.dt();
    double sum = 0.0, sumsq = 0.0;
    for (int sc = 0; sc < paths.n_scenarios(); ++sc) {
      double running = 0.0;
      for (int k = 0; k < paths.n_steps(); ++k) {
        const double tk = paths.time_at(k);
        const DiscreteMeasure law = paths.conditional_measure(sc, k);
        double fbar = 0.0;
        for (int cp = 0; cp < paths.n_particles(); ++cp) {
          const Vec x = paths.state(sc, cp, k);
          const Vec a = policy.action(p, tk, k, x, law);
          fbar += paths.particle_weights()[cp] * p.f(tk, x, law, a);
        }
        running += dt * fbar;
      }
      const DiscreteMeasure terminal_law =
          paths.conditional_measure(sc, paths.n_steps());
      const double bracket =
          running + lift(vg, s, terminal_law, cond_lift).value;
      sum += bracket;
      sumsq += bracket * bracket;
    }
    const int ns = paths.n_scenarios();
    pr.rhs = sum / ns;
    const double var = std::max(sumsq / ns - pr.rhs * pr.rhs, 0.0);
    pr.std_error = std::sqrt(var / ns);
    pr.gap = rep.lhs - pr.rhs;
    rep.policies.push_back(pr);
  }

  rep.pass = true;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rep.policies.size(); ++k) {
    const auto& pr = rep.policies[k];
    if (pr.gap < -(3.0 * pr.std_error + grid_budget)) rep.pass = false;
    if (pr.gap < best_gap) {
      best_gap = pr.gap;
      rep.best_policy = static_cast<int>(k);
    }
  }
  return rep;
}

ControlPolicy greedy_grid_policy(const ProblemSpec& p, const ValueGrid& vg) {
  if (vg.n_particles() != 1)
    throw std::invalid_argument(
        "greedy_grid_policy: needs a single-particle value grid");
  const ValueGrid* grid = &vg;
  const int d = vg.dn();
  const double eps = vg.spec().eps;
  auto fn = [grid, d, eps, &p](double t, const Vec& x,
                               const DiscreteMeasure& mu) {
    const Vec grad = grid->grad_particle(t, x, 0, d, true);
    const Mat hess = grid->hess_particle(t, x, 0, 0, d, true);
    double best = -std::numeric_limits<double>::infinity();
    Vec best_a = p.control_set.front();
    for (const auto& a : p.control_set) {
      const Mat s = p.sigma(t, x, a);
      const Mat s0 = p.sigma0(t, x);
      const Mat diff = s * s.transpose() + s0 * s0.transpose() +
                       eps * eps * Mat::Identity(d, d);
      const double val = p.f(t, x, mu, a) + p.b(t, x, mu, a).dot(grad) +
                         0.5 * (diff * hess).trace();
      if (val > best) {
        best = val;
        best_a = a;
      }
    }
    return best_a;
  };
  return ControlPolicy::feedback(fn, "grid-greedy");
}

// ---------------------------------------------------------------------------

std::string ItoReport::to_json() const {
  nlohmann::json j;
  j["h"] = h;
  j["quotient"] = quotient;
  j["std_error"] = std_error;
  j["generator"] = generator;
  j["budget_per_h"] = budget_per_h;
  j["pass"] = pass;
  return j.dump(2);
}

ProbeVerdict ItoReport::verdict() const {
  ProbeVerdict v;
  v.check = "ito-generator";
  v.inputs_digest = digest_inputs(std::to_string(h));
  v.statistic = std::abs(quotient - generator);
  v.tolerance = 3.0 * std_error + budget_per_h * h;
  v.pass = pass;
  return v;
}

ItoReport ito_generator_check(const ProblemSpec& p,
                              const MeasureFunctionalView& u, double t,
                              const DiscreteMeasure& mu, double h, const Vec& a,
                              const SimulationConfig& sim,
                              double budget_per_h) {
  ItoReport rep;
  rep.h = h;
  rep.budget_per_h = budget_per_h;

  SimulationConfig c = sim;
  c.t0 = t;
  c.t1 = t + h;
  const ControlPolicy policy = ControlPolicy::constant(a);
  const PathBundle paths = simulate_mean_field(p, mu, policy, c);

  const double u0 = u.value(t, mu);
  double sum = 0.0, sumsq = 0.0;
  for (int sc = 0; sc < paths.n_scenarios(); ++sc) {
    const DiscreteMeasure law =
        paths.conditional_measure(sc, paths.n_steps());
    const double q = (u.value(t + h, law) - u0) / h;
    sum += q;
    sumsq += q * q;
  }
  const int ns = paths.n_scenarios();
  rep.quotient = sum / ns;
  const double var = std::max(sumsq / ns - rep.quotient * rep.quotient, 0.0);
  rep.std_error = std::sqrt(var / ns);

  // Generator terms of the conditional-law Ito expansion at (t, mu).
  double gen = u.dt(t, mu);
  for (int k = 0; k < mu.size(); ++k) {
    const Vec x = mu.point(k);
    const Mat s = p.sigma(t, x, a);
    const Mat s0 = p.sigma0(t, x);
    gen += mu.weight(k) * u.dmu(t, mu, x).dot(p.b(t, x, mu, a));
    gen += 0.5 * mu.weight(k) *
           ((s * s.transpose() + s0 * s0.transpose()) * u.dx_dmu(t, mu, x))
               .trace();
  }
  for (int k = 0; k < mu.size(); ++k)
    for (int l = 0; l < mu.size(); ++l) {
      const Mat s0x = p.sigma0(t, mu.point(k));
      const Mat s0y = p.sigma0(t, mu.point(l));
      gen += 0.5 * mu.weight(k) * mu.weight(l) *
             (s0x * s0y.transpose() *
              u.dmu2(t, mu, mu.point(k), mu.point(l)))
                 .trace();
    }
  rep.generator = gen;
  rep.pass = std::abs(rep.quotient - rep.generator) <=
             3.0 * rep.std_error + budget_per_h * h;
  return rep;
}

// ---------------------------------------------------------------------------

std::string PenalizedGapResult::to_json() const {
  nlohmann::json j;
  j["argmax_index"] = argmax_index;
  j["t_star"] = t_star;
  j["gap"] = gap;
  j["m2_at_max"] = m2_at_max;
  j["m2_bound"] = m2_bound;
  j["m2_bound_ok"] = m2_bound_ok;
  return j.dump(2);
}

ProbeVerdict PenalizedGapResult::verdict() const {
  ProbeVerdict v;
  v.check = "penalized-maximizer";
  v.inputs_digest = digest_inputs(std::to_string(argmax_index));
  v.statistic = m2_at_max;
  v.tolerance = m2_bound;
  v.pass = m2_bound_ok && argmax_index >= 0;
  return v;
}

PenalizedGapResult penalized_maximizer_search(const PenalizedGapSpec& spec) {
  if (spec.family.empty())
    throw std::invalid_argument("penalized_maximizer_search: empty family");
  const double bound =
      spec.l0 / 3.0 + std::exp(spec.horizon) * (spec.u1_sup_norm + spec.ell2);

  // Intake: every member must sit inside the moment ball the bound implies.
  for (std::size_t k = 0; k < spec.family.size(); ++k) {
    const double m2 = moment(spec.family[k].second, 2.0);
    if (spec.delta * m2 > bound)
      throw std::invalid_argument(
          "penalized_maximizer_search: family member " + std::to_string(k) +
          " escapes the moment ball (delta*M2 = " +
          std::to_string(spec.delta * m2) + " > " + std::to_string(bound) +
          ")");
  }

  PenalizedGapResult out;
  out.m2_bound = bound;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < spec.family.size(); ++k) {
    const auto& [tk, muk] = spec.family[k];
    const double val =
        spec.u1(tk, muk) - spec.v_check(tk, muk) - spec.delta * moment(muk, 2.0);
    if (val > best) {
      best = val;
      out.argmax_index = static_cast<int>(k);
    }
  }
  const auto& [ts, mus] = spec.family[out.argmax_index];
  out.t_star = ts;
  out.gap = best;
  out.m2_at_max = moment(mus, 2.0);
  out.m2_bound_ok = spec.delta * out.m2_at_max <= bound + 1e-12;
  return out;
}

double choose_penalization_delta(
    const std::function<double(double, const DiscreteMeasure&)>& u1,
    const std::function<double(double, const DiscreteMeasure&)>& v_check,
    double t0, const DiscreteMeasure& mu0, double l0) {
  const double m2 = moment(mu0, 2.0);
  double delta = 1.0;
  for (int it = 0; it < 60; ++it) {
    if (u1(t0, mu0) - v_check(t0, mu0) - delta * m2 >= l0 / 2.0) return delta;
    delta *= 0.5;
  }
  throw std::runtime_error(
      "choose_penalization_delta: no delta in {1, 1/2, ...} reaches l0/2; is "
      "u1 - v >= l0 at the base point?");
}

// ---------------------------------------------------------------------------

std::string FournierGuillinReport::to_json() const {
  nlohmann::json j;
  j["n_values"] = n_values;
  j["mean_w1"] = mean_w1;
  j["h_values"] = h_values;
  j["ratios"] = ratios;
  j["fitted_constant"] = fitted_constant;
  j["band_factor"] = band_factor;
  return j.dump(2);
}

ProbeVerdict FournierGuillinReport::verdict(double band_limit) const {
  ProbeVerdict v;
  v.check = "fournier-guillin-envelope";
  v.inputs_digest = digest_inputs(std::to_string(n_values.size()));
  v.statistic = band_factor;
  v.tolerance = band_limit;
  v.pass = band_factor <= band_limit;
  return v;
}

FournierGuillinReport fournier_guillin_probe(const DiscreteMeasure& mu,
                                             const std::vector<int>& n_list,
                                             int trials, std::uint64_t seed) {
  const int d = mu.dim();
  if (d > 2)
    throw std::invalid_argument(
        "fournier_guillin_probe: d = 1 or 2 samplers only");
  FournierGuillinReport rep;
  const double q0 = fournier_guillin_q0(d);
  const double mq = std::pow(moment(mu, q0), 1.0 / q0);

  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    const int n = n_list[ni];
    double acc = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      CounterRng rng(
          CounterRng::derive_key(seed, StreamRole::Probe, trial, ni));
      Mat pts(d, n);
      for (int k = 0; k < n; ++k) {
        const double u = rng.uniform();
        double cum = 0.0;
        int pick = mu.size() - 1;
        for (int a = 0; a < mu.size(); ++a) {
          cum += mu.weight(a);
          if (u < cum) {
            pick = a;
            break;
          }
        }
        pts.col(k) = mu.point(pick);
      }
      const DiscreteMeasure emp(std::move(pts), Vec::Constant(n, 1.0 / n));
      acc += d == 1 ? wasserstein_1d(mu, emp, 1.0) : wasserstein_lp(mu, emp, 1.0);
    }
    const double mean_w1 = acc / trials;
    const double hn = fournier_guillin_h(n, d);
    rep.n_values.push_back(n);
    rep.mean_w1.push_back(mean_w1);
    rep.h_values.push_back(hn);
    rep.ratios.push_back(mq > 0.0 ? mean_w1 / (hn * mq) : 0.0);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double r : rep.ratios) {
    rep.fitted_constant = std::max(rep.fitted_constant, r);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  rep.band_factor = lo > 0.0 ? hi / lo : 0.0;
  return rep;
}

DiscreteMeasure make_truncated_normal_1d(int atoms, double lo, double hi,
                                         double mean, double sd) {
  if (atoms < 1 || !(hi > lo) || !(sd > 0.0))
    throw std::invalid_argument("make_truncated_normal_1d: bad parameters");
  Mat pts(1, atoms);
  Vec w(atoms);
  const double step = (hi - lo) / atoms;
  for (int k = 0; k < atoms; ++k) {
    const double x = lo + (k + 0.5) * step;
    pts(0, k) = x;
    const double z = (x - mean) / sd;
    w[k] = std::exp(-0.5 * z * z);
  }
  w /= w.sum();
  return DiscreteMeasure(std::move(pts), std::move(w));
}

}  // namespace mfc
