#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfc/bellman.hpp"
#include "mfc/cylindrical.hpp"
#include "mfc/lift.hpp"
#include "mfc/measure.hpp"
#include "mfc/particle.hpp"
#include "mfc/problem.hpp"

namespace mfc {

// Common verdict record consumed by the CLI's aggregate verify subcommand.
struct ProbeVerdict {
  std::string check;
  std::string inputs_digest;
  double statistic = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string to_json() const;
};

std::string digest_inputs(const std::string& canonical);

// ---------------------------------------------------------------------------
// L-derivative calculus checks

struct LDerivReport {
  std::string functional;
  double max_abs_error = 0.0;       // first-order vs finite differences
  double max_rel_error = 0.0;
  double max_second_error = 0.0;    // second-order identity vs FD
  int atoms_checked = 0;
  ProbeVerdict verdict(double tolerance) const;
};

// Lifts u to atom coordinates and differences them: the derivative of the
// lift at atom k equals weight_k * dmu u(t,mu)(x_k); the second derivative
// equals w_k w_l dmu2(x_k,x_l) + delta_{kl} w_k dx dmu(x_k).
LDerivReport l_derivative_fd_check(const CylindricalFunctional& u, double t,
                                   const DiscreteMeasure& mu, double fd_step);

// ---------------------------------------------------------------------------
// HJB residual of the Wasserstein-space equation at (t, mu): exact atom sums,
// max over the finite control grid.
double hjb_residual(const ProblemSpec& p, const MeasureFunctionalView& u,
                    double t, const DiscreteMeasure& mu);

// Residual of the supersolution-side inequality over the extended domain
// P2(R^d x A): atoms of nu are stacked (x, a) pairs in R^{2d}, the control
// is integrated by nu instead of maximized, and the derivative projections
// pi_d / pi_{dxd} slice the leading coordinates of the R^{2d} objects.
double supersolution_residual(const ProblemSpec& p,
                              const MeasureFunctionalView& u, double t,
                              const DiscreteMeasure& nu);

// Derivative view of the lifted value grid: the L-derivatives of
// v(t,mu) = int vbar d mu^{(x) n} are tensor sums of lattice derivatives.
MeasureFunctionalView make_lifted_functional(const ValueGrid& vg);

// Residual of the n-particle equation transported to measure space: the sup
// sits inside the tensor integral and the mollified coefficients and the
// eps^2 I term appear exactly as the grid solver discretizes them. This is
// the equation the lifted grid value solves, up to scheme error.
double particle_pde_residual(const ProblemSpec& p,
                             const MollifiedCoefficients& mc,
                             const ValueGrid& vg, double t,
                             const DiscreteMeasure& mu);

// ---------------------------------------------------------------------------
// Dynamic programming probe (one-sided: finite policy families cannot attain
// the sup, so the lifted value must dominate every policy up to tolerance).

struct DppPolicyResult {
  std::string policy;
  double rhs = 0.0;
  double std_error = 0.0;
  double gap = 0.0;  // lhs - rhs
};

struct DppReport {
  double t = 0.0, s = 0.0;
  double lhs = 0.0;
  std::vector<DppPolicyResult> policies;
  double grid_budget = 0.0;
  bool pass = false;       // every gap >= -(3 stderr + grid budget)
  int best_policy = -1;    // smallest gap
  std::string to_json() const;
  ProbeVerdict verdict() const;
};

DppReport dpp_probe(const ProblemSpec& p, const ValueGrid& vg, double t,
                    const DiscreteMeasure& mu, double s,
                    const std::vector<ControlPolicy>& policies,
                    const SimulationConfig& sim, double grid_budget,
                    const LiftEstimatorConfig& lift_cfg = {});

// Greedy feedback policy from a solved grid: the action maximizing the
// single-particle Hamiltonian read off the grid derivatives.
ControlPolicy greedy_grid_policy(const ProblemSpec& p, const ValueGrid& vg);

// ---------------------------------------------------------------------------
// Generator consistency: (E0 u(t+h, law) - u(t, mu)) / h against the
// closed-form generator terms at (t, mu) under a frozen control.

struct ItoReport {
  double h = 0.0;
  double quotient = 0.0;
  double std_error = 0.0;
  double generator = 0.0;
  double budget_per_h = 0.0;
  bool pass = false;
  std::string to_json() const;
  ProbeVerdict verdict() const;
};

ItoReport ito_generator_check(const ProblemSpec& p,
                              const MeasureFunctionalView& u, double t,
                              const DiscreteMeasure& mu, double h, const Vec& a,
                              const SimulationConfig& sim,
                              double budget_per_h = 1.0);

// ---------------------------------------------------------------------------
// Moment-penalized maximizer search over a finite (t, mu) family.

struct PenalizedGapSpec {
  double delta = 0.25;
  double l0 = 0.1;                 // contradiction level
  double u1_sup_norm = 1.0;
  double ell2 = 1.0;               // value bound (1+T)K
  double horizon = 1.0;            // T in the moment bound
  std::function<double(double, const DiscreteMeasure&)> u1;
  std::function<double(double, const DiscreteMeasure&)> v_check;
  std::vector<std::pair<double, DiscreteMeasure>> family;
};

struct PenalizedGapResult {
  int argmax_index = -1;
  double t_star = 0.0;
  double gap = 0.0;
  double m2_at_max = 0.0;
  double m2_bound = 0.0;
  bool m2_bound_ok = false;
  std::string to_json() const;
  ProbeVerdict verdict() const;
};

PenalizedGapResult penalized_maximizer_search(const PenalizedGapSpec& spec);

// delta selection: halve from 1 until u1 - v - delta M2 >= l0/2 at (t0,mu0).
double choose_penalization_delta(
    const std::function<double(double, const DiscreteMeasure&)>& u1,
    const std::function<double(double, const DiscreteMeasure&)>& v_check,
    double t0, const DiscreteMeasure& mu0, double l0);

// ---------------------------------------------------------------------------
// Empirical-measure rate probe: Monte Carlo E W1(mu, mu_hat_n) against the
// C h_n M_{q0}^{1/q0} envelope.

struct FournierGuillinReport {
  std::vector<int> n_values;
  std::vector<double> mean_w1;
  std::vector<double> h_values;
  std::vector<double> ratios;  // mean_w1 / (h_n * M^{1/q0})
  double fitted_constant = 0.0;
  double band_factor = 0.0;  // max ratio / min ratio
  std::string to_json() const;
  ProbeVerdict verdict(double band_limit) const;
};

FournierGuillinReport fournier_guillin_probe(const DiscreteMeasure& mu,
                                             const std::vector<int>& n_list,
                                             int trials, std::uint64_t seed);

// Fine discrete stand-in for a truncated normal on [lo, hi]: density-weighted
// uniform grid of the given size.
DiscreteMeasure make_truncated_normal_1d(int atoms, double lo, double hi,
                                         double mean, double sd);

}  // namespace mfc
