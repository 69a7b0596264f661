#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfc/problem.hpp"

namespace mfc {

// Quadrature rule for the compactly supported bump mollifier
//   phi(u) ~ exp(-1/(1-u^2)) on (-1,1),  scaled to level m.
// Node weights are normalized so the discrete kernel has unit mass; the
// mollified coefficients are then convex combinations of coefficient values,
// which preserves the sup bounds and Lipschitz constants exactly.
struct MollifierSpec {
  int m = 8;             // mollification level; kernel support radius 1/m
  int d = 1;             // spatial dimension of one particle block
  int quad_nodes = 7;    // Gauss-Legendre nodes per scalar dimension
  int mc_samples = 4096; // Monte Carlo fallback above the tensor cap; 0 = off

  struct SpaceNode {
    Vec offset;     // y in R^d, already scaled by 1/m
    double weight;  // normalized
  };
  struct TimeNode {
    double offset;  // s, already scaled by 1/m
    double weight;  // normalized
  };

  std::vector<TimeNode> time_table;
  std::vector<SpaceNode> space_table;

  // Raw (pre-normalization) discrete kernel masses; diagnostics for the
  // quadrature resolution.
  double raw_time_mass = 0.0;
  double raw_space_mass = 0.0;

  // Upper bound c with int |y|^rho Phi(y) dy <= c for the unscaled kernel,
  // valid for both the dense integral and this discrete rule.
  double c_phi_rho(double rho) const;

  // Sum of normalized weights; equals 1 up to roundoff by construction.
  double quadrature_unit_mass() const;

  static MollifierSpec bump(int m, int d, int quad_nodes = 7,
                            int mc_samples = 4096);
};

// The smooth finite-dimensional coefficients
//   b^i_{n,m}, f^i_{n,m} : [0,T] x R^{dn} x A -> R^d, R
//   g^i_{n,m}            : R^{dn} -> R
// evaluated by tensor-product quadrature over the scaled kernel supports,
// with the inner coefficient read at the clamped time (t-s)^+ /\ T, the
// shifted state x^i - y^i and the shifted empirical measure
// (1/n) sum_j delta_{x^j - y^j}.
class MollifiedCoefficients {
 public:
  MollifiedCoefficients(ProblemSpec p, int n, MollifierSpec spec);

  int n() const { return n_; }
  int m() const { return spec_.m; }
  const ProblemSpec& problem() const { return problem_; }
  const MollifierSpec& spec() const { return spec_; }

  Vec b_i(int i, double t, const Vec& xbar, const Vec& a) const;
  double f_i(int i, double t, const Vec& xbar, const Vec& a) const;
  double g_i(int i, const Vec& xbar) const;

  // Right-hand side of the sup bound for b: K(1 + c m^-rho + |x^i|^rho).
  double b_bound(int i, const Vec& xbar) const;

  // Right-hand sides of the consistency estimate, evaluated on the same
  // quadrature rule as the coefficients themselves.
  double consistency_rhs_bf(double t) const;  // time + space term, for b, f
  double consistency_rhs_g() const;           // space term only

 private:
  template <typename Visitor>
  void for_each_point(int i, bool with_time, double t, const Vec& xbar,
                      Visitor&& visit) const;

  ProblemSpec problem_;
  int n_ = 1;
  MollifierSpec spec_;
  bool use_mc_ = false;
  std::vector<std::pair<Vec, double>> mc_table_;  // (s | ybar) draws, weight
};

// Sampling report for the consistency, bound, Lipschitz and convergence
// estimates of the mollified coefficients. Violations are counted, never
// thrown.
struct MollifierLemmaReport {
  std::string problem;
  int n = 1;
  int m = 8;
  std::uint64_t seed = 0;
  int samples = 0;

  int bound_violations = 0;        // item (1)
  double bound_worst_slack = 0.0;  // max LHS - RHS over samples (<= 0 good)
  int consistency_violations = 0;  // item (2)
  double consistency_worst_slack = 0.0;
  int lipschitz_violations = 0;  // item (3)
  double lipschitz_worst_slack = 0.0;
  double lipschitz_worst_quotient = 0.0;

  // Item (4): combined |coeff_m - coeff| gap per level, and the count of
  // sampled points where the gap failed to decrease strictly from the
  // smallest to the largest level.
  std::vector<int> gap_levels;
  std::vector<double> gap_max;  // per level, max over sampled points
  int gap_monotone_violations = 0;

  bool pass() const;
  std::string to_json() const;
};

MollifierLemmaReport verify_mollifier_lemma(const ProblemSpec& p, int n,
                                            int quad_nodes, int n_samples,
                                            std::uint64_t seed, int m_check = 8,
                                            std::vector<int> gap_levels = {
                                                8, 16, 32, 64});

}  // namespace mfc
