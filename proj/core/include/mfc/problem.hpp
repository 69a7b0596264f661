#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfc/measure.hpp"

namespace mfc {

// One mean field control problem instance: state dynamics
//   dX = b(t,X,law,a) dt + sigma(t,X,a) dW + sigma0(t,X) dW0,
// running reward f, terminal reward g, and the constants under which the
// coefficients are declared admissible (Lipschitz/growth constant K, growth
// exponent rho < 1, time Holder exponent beta).
struct ProblemSpec {
  using DriftFn =
      std::function<Vec(double, const Vec&, const DiscreteMeasure&, const Vec&)>;
  using SigmaFn = std::function<Mat(double, const Vec&, const Vec&)>;
  using Sigma0Fn = std::function<Mat(double, const Vec&)>;
  using RunningFn = std::function<double(double, const Vec&,
                                         const DiscreteMeasure&, const Vec&)>;
  using TerminalFn = std::function<double(const Vec&, const DiscreteMeasure&)>;

  std::string name;
  int d = 1;
  double T = 1.0;
  std::vector<Vec> control_set;  // finite grid standing in for compact A

  DriftFn b;
  SigmaFn sigma;
  Sigma0Fn sigma0;
  RunningFn f;
  TerminalFn g;

  double K = 1.0;
  double rho = 0.5;   // in [0,1)
  double beta = 1.0;  // in (0,1]

  // Declared structure flags; consumers may exploit them after probing.
  bool mu_independent = false;    // b, f, g ignore the measure argument
  bool time_invariant = false;    // coefficients ignore t

  void validate() const;  // throws on violated structural invariants
};

// Worst-case quotients observed when sampling one condition of an
// assumption. A quotient <= 1 means the declared constant dominates.
struct ConditionStat {
  std::string condition;
  double worst_ratio = 0.0;
  int samples = 0;
  bool pass = false;
  std::string worst_input;  // printable description of the offender
};

// Sampling-based audit result. A pass is evidence, not proof: the audit can
// only sample, no sound decision procedure exists for joint continuity over
// the whole Wasserstein space.
struct AssumptionReport {
  std::string assumption;  // "A" or "B"
  std::string problem;
  std::uint64_t seed = 0;
  int samples = 0;
  double tolerance = 0.0;
  std::vector<ConditionStat> conditions;
  std::vector<std::string> failures;  // callables that threw, with inputs

  bool pass() const;
  std::string to_json() const;
};

// Checks items (1)-(3): joint Lipschitz quotient against
// K(|x-x'| + |t-t'|^beta + W1(mu,mu')), growth against K(1+|x|^rho), and the
// bound |f|+|g| <= K. Samples evaluate in parallel on their own substreams;
// the reduction runs in index order, so results are jobs-independent.
AssumptionReport audit_assumption_a(const ProblemSpec& p,
                                    std::uint64_t sampler_seed, int n_samples,
                                    double tolerance = 1e-6, int jobs = 1);

// Finite-difference estimates of the sigma / sigma0 derivative bounds.
AssumptionReport audit_assumption_b(const ProblemSpec& p, double fd_step,
                                    int n_samples, double tolerance = 1e-6,
                                    std::uint64_t sampler_seed = 7,
                                    int jobs = 1);

}  // namespace mfc
