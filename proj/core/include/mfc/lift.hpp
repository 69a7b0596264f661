#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfc/bellman.hpp"
#include "mfc/measure.hpp"
#include "mfc/mollify.hpp"
#include "mfc/problem.hpp"

namespace mfc {

// Fournier-Guillin empirical-measure rate h_n and moment exponent q0 for
// E W1(mu, mu_hat_n) <= C_d h_n M_{q0}(mu)^{1/q0}.
double fournier_guillin_h(int n, int d);
double fournier_guillin_q0(int d);

struct LiftEstimatorConfig {
  std::int64_t tensor_budget = 1000000;  // exact tensor iff |supp|^n <= budget
  int mc_draws = 20000;
  std::uint64_t seed = 99;
  bool interpolate_time = false;
};

struct LiftedValue {
  double t = 0.0;
  double value = 0.0;
  std::string estimator;  // "exact-tensor" or "monte-carlo"
  int draws = 0;
  double std_error = 0.0;
  bool within_ell2 = true;
};

// v(t, mu) = integral of the grid values against mu^{(x) n}, exact tensor
// summation over atom tuples when feasible, iid Monte Carlo otherwise.
LiftedValue lift(const ValueGrid& vg, double t, const DiscreteMeasure& mu,
                 const LiftEstimatorConfig& cfg = {});

struct OracleConfig {
  double radius = 4.0;
  int nodes = 801;  // coarse level; Richardson pairs it with 2*nodes-1
  double cfl_safety = 0.9;
};

// Dense single-agent HJB value for measure-independent problems with zero
// common noise volatility: the control problem decouples and
// v(t, mu) = integral u(t, x) mu(dx). Richardson-extrapolated from two
// resolutions. Refuses problems where the decoupling would be unsound.
double oracle_value_decoupled(const ProblemSpec& p, double t,
                              const DiscreteMeasure& mu,
                              const OracleConfig& cfg = {});

struct ConvergenceReport {
  std::string axis;  // "epsilon", "m" or "n"
  std::vector<double> parameter;
  std::vector<double> values;
  std::vector<double> std_errors;
  double reference = 0.0;
  bool has_reference = false;
  std::string reference_provenance;
  std::vector<double> gaps;
  std::vector<double> ratios;  // successive gap ratios (epsilon axis)
  double fitted_constant = 0.0;
  bool pass = false;
  std::string note;

  std::string to_json() const;
};

std::string reports_to_csv(const std::vector<ConvergenceReport>& reports);
std::string reports_to_gnuplot(const std::vector<ConvergenceReport>& reports);

struct LadderConfig {
  GridSpec grid;          // eps is overridden per ladder point
  int quad_nodes = 7;
  LiftEstimatorConfig lift_cfg;
  OracleConfig oracle;
  double ratio_band_lo = 0.3;  // epsilon-axis shape band
  double ratio_band_hi = 0.8;
  int jobs = 1;
};

// Solves the Bellman grid per ladder point, lifts at (t, mu), and emits one
// shape report per axis: epsilon linearity, m stabilization, and the n-axis
// gap against the Fournier-Guillin envelope.
std::vector<ConvergenceReport> run_ladder(const ProblemSpec& p, double t,
                                          const DiscreteMeasure& mu,
                                          const std::vector<double>& eps_list,
                                          const std::vector<int>& n_list,
                                          const std::vector<int>& m_list,
                                          const LadderConfig& cfg);

}  // namespace mfc
