#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfc/mollify.hpp"
#include "mfc/problem.hpp"

namespace mfc {

// Simulation blew up (non-finite state). Carries the offending step.
struct NumericalAbort : std::runtime_error {
  NumericalAbort(const std::string& what, int step_index)
      : std::runtime_error(what + " at step " + std::to_string(step_index)),
        step(step_index) {}
  int step;
};

// Brownian increments on a uniform grid over [t0, t1]: one shared d-dim
// common stream per scenario, plus per-(scenario, particle) idiosyncratic
// W and B streams. Streams are counter-based and keyed by
// (seed, role, scenario, particle), so enlarging the scenario count never
// perturbs existing streams.
class NoiseBundle {
 public:
  NoiseBundle(double t0, double t1, int n_steps, int n_scenarios,
              int n_particles, int d, std::uint64_t common_seed,
              std::uint64_t idio_seed);

  double t0() const { return t0_; }
  double t1() const { return t1_; }
  double dt() const { return dt_; }
  int n_steps() const { return n_steps_; }
  int n_scenarios() const { return n_scenarios_; }
  int n_particles() const { return n_particles_; }
  int d() const { return d_; }
  std::uint64_t common_seed() const { return common_seed_; }
  std::uint64_t idio_seed() const { return idio_seed_; }

  // Increment views; dW0 is identical across particles of one scenario.
  Eigen::Map<const Vec> dW0(int scenario, int step) const;
  Eigen::Map<const Vec> dW(int scenario, int particle, int step) const;
  Eigen::Map<const Vec> dB(int scenario, int particle, int step) const;

  // 3-sigma test of the pooled increment variance against dt, run at
  // generation. A false flag for an honest stream is a ~0.3% event; callers
  // that need certainty fix their seeds.
  bool variance_check_passed() const { return variance_ok_; }
  double variance_statistic() const { return variance_stat_; }

 private:
  double t0_, t1_, dt_;
  int n_steps_, n_scenarios_, n_particles_, d_;
  std::uint64_t common_seed_, idio_seed_;
  std::vector<double> common_, idio_w_, idio_b_;
  bool variance_ok_ = true;
  double variance_stat_ = 0.0;
};

// Control policies representable by the harness: constant action, feedback
// through a (t, x, empirical-law) rule, or an open-loop table per step.
// Every emitted action must be a member of the finite control grid.
class ControlPolicy {
 public:
  enum class Kind { Constant, Feedback, OpenLoop };
  using FeedbackFn =
      std::function<Vec(double, const Vec&, const DiscreteMeasure&)>;

  static ControlPolicy constant(Vec a);
  static ControlPolicy feedback(FeedbackFn fn, std::string label = "feedback");
  static ControlPolicy open_loop(std::vector<Vec> table);

  Kind kind() const { return kind_; }
  const std::string& label() const { return label_; }

  // Evaluates the policy and checks membership in the control grid.
  Vec action(const ProblemSpec& p, double t, int step, const Vec& x,
             const DiscreteMeasure& mu) const;

 private:
  Kind kind_ = Kind::Constant;
  Vec constant_;
  FeedbackFn feedback_;
  std::vector<Vec> table_;
  std::string label_;
};

// Euler-Maruyama trajectories: scenario x particle x time x d, plus the
// per-scenario particle weights used for the conditional empirical law.
class PathBundle {
 public:
  PathBundle(double t0, double dt, int n_steps, int n_scenarios,
             int n_particles, int d, Vec particle_weights, std::string policy,
             double eps);

  double t0() const { return t0_; }
  double dt() const { return dt_; }
  double time_at(int step) const { return t0_ + step * dt_; }
  int n_steps() const { return n_steps_; }
  int n_scenarios() const { return n_scenarios_; }
  int n_particles() const { return n_particles_; }
  int d() const { return d_; }
  double eps() const { return eps_; }
  const std::string& policy() const { return policy_; }
  const Vec& particle_weights() const { return weights_; }

  Eigen::Map<Vec> state(int scenario, int particle, int step);
  Eigen::Map<const Vec> state(int scenario, int particle, int step) const;

  // Empirical law of the particles of one scenario at one step; the
  // conditional law given the common path at desk scale.
  DiscreteMeasure conditional_measure(int scenario, int step) const;

  // CSV dump, one row per (scenario, particle, step).
  std::string to_csv() const;

 private:
  double t0_, dt_;
  int n_steps_, n_scenarios_, n_particles_, d_;
  double eps_;
  std::string policy_;
  Vec weights_;
  std::vector<double> data_;
};

struct SimulationConfig {
  double t0 = 0.0;
  double t1 = -1.0;  // simulation horizon; negative means the problem's T
  double eps = 0.0;
  int n_copies = 0;  // 0: one copy per atom of the initial measure
  int n_common = 1;
  int n_steps = 64;
  std::uint64_t common_seed = 1;
  std::uint64_t idio_seed = 2;
  int jobs = 1;
};

// Mean field dynamics with conditional law approximated, inside each common
// path, by the empirical law of the idiosyncratic copies.
PathBundle simulate_mean_field(const ProblemSpec& p, const DiscreteMeasure& init,
                               const ControlPolicy& policy,
                               const SimulationConfig& cfg);

// Coupled n-particle system driven by the mollified drift, per-particle
// W^i, B^i and the shared common noise.
PathBundle simulate_mollified_particles(const MollifiedCoefficients& mc,
                                        double t0, const Vec& xbar0,
                                        const std::vector<ControlPolicy>& policies,
                                        const SimulationConfig& cfg);

struct MomentBoundReport {
  // E sup |X|^2 <= C (1 + E|xi|^2)
  double second_moment_constant = 0.0;
  // E sup |X - X'|^2 <= C E|xi - xi'|^2 under synchronous coupling
  double stability_constant = 0.0;
  // E sup_{[t,t+h]} |X - xi|^2 ~ C h and the endpoint version
  double sup_increment_slope = 0.0;
  double endpoint_increment_slope = 0.0;
  std::vector<double> h_values;
  std::vector<double> sup_increments;
  std::vector<double> endpoint_increments;
  std::string to_json() const;
};

MomentBoundReport moment_bound_probe(const ProblemSpec& p,
                                     const std::vector<DiscreteMeasure>& inits,
                                     const ControlPolicy& policy,
                                     const std::vector<double>& h_list,
                                     const SimulationConfig& cfg);

}  // namespace mfc
