#pragma once

#include <string>
#include <vector>

#include "mfc/problem.hpp"

namespace mfc {

// Registry of the shipped benchmark problems (all with d = 1):
//
//   "decoupled-bounded"  no measure dependence, sigma = sigma0 = 0,
//                        two-peaked terminal reward; the control switches
//                        sign at the symmetry axis, so the value function
//                        carries a genuine kink and the epsilon-perturbation
//                        acts at first order. Oracle-solvable.
//   "mean-reverting-mf"  drift reverts to the population mean, state
//                        dependent common noise volatility.
//   "zero-cost"          f = g = 0 over the mean-reverting dynamics.
//
// Hand-computed admissibility constants are documented in the README.
ProblemSpec make_benchmark(const std::string& name);

std::vector<std::string> benchmark_names();

// Synthetic problems used by probes and tests; not part of the registry.
// Pure common noise: b = 0, sigma = 0, sigma0 = I_d, f = g = 0.
ProblemSpec make_pure_common_noise(int d);
// Unit running reward over the given base dynamics: f = 1, g = 0, so the
// value is exactly T - t whatever the dynamics do.
ProblemSpec make_unit_running_reward(const ProblemSpec& base);

}  // namespace mfc
