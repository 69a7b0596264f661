#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfc/mollify.hpp"
#include "mfc/problem.hpp"

namespace mfc {

// Truncated space-time lattice for the n-particle Bellman equation: the box
// [-radius, radius]^{dn} with nodes_per_axis points per scalar axis.
struct GridSpec {
  double radius = 3.0;
  int nodes_per_axis = 61;
  // 0 lets the solver pick the largest CFL-stable step count; a positive
  // value is honored if it satisfies the CFL bound and rejected otherwise.
  int time_steps = 0;
  double eps = 0.1;          // epsilon^2 I_d added to every diagonal block
  double cfl_safety = 0.9;
  double boundary_warn_threshold = 1e-2;
  int jobs = 1;              // per-step node parallelism
};

// Diffusion matrix of the n-particle generator at one (t, xbar, abar):
//   Q = blockdiag(sigma sigma^T) + eps^2 I_{dn} + S S^T,
// with S the stacked sigma0 row blocks.
struct DiffusionMatrix {
  Mat q;
  double min_eigenvalue = 0.0;
  double symmetry_error = 0.0;
  bool positive_definite(double eps) const {
    return min_eigenvalue >= eps * eps - 1e-9;
  }
};

DiffusionMatrix assemble_q(const ProblemSpec& p, int n, double t,
                           const Vec& xbar, const std::vector<Vec>& abar,
                           double eps);

// Tabulated solution of the Bellman equation on the lattice, slices running
// from t = 0 to t = T. Derivative queries difference the lattice and then
// interpolate multilinearly.
class ValueGrid {
 public:
  ValueGrid(GridSpec spec, int dn, double horizon, int steps,
            std::string problem, int n, int m);

  const GridSpec& spec() const { return spec_; }
  int dn() const { return dn_; }
  int axis_nodes() const { return spec_.nodes_per_axis; }
  double h() const { return h_; }
  double dt() const { return dt_; }
  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  std::int64_t nodes() const { return node_count_; }
  int n_particles() const { return n_; }
  int mollify_level() const { return m_; }
  const std::string& problem() const { return problem_; }

  double coord(int idx) const { return -spec_.radius + idx * h_; }
  double& at(int slice, std::int64_t node) {
    return values_[static_cast<std::size_t>(slice) * node_count_ + node];
  }
  double at(int slice, std::int64_t node) const {
    return values_[static_cast<std::size_t>(slice) * node_count_ + node];
  }

  // Nearest time slice; throws if t is off-lattice and interpolation is off.
  int slice_of(double t, bool allow_interpolation = false) const;

  double value(double t, const Vec& xbar, bool interp_time = false) const;
  Vec grad_particle(double t, const Vec& xbar, int i, int d,
                    bool interp_time = false) const;
  Mat hess_particle(double t, const Vec& xbar, int i, int j, int d,
                    bool interp_time = false) const;
  double time_derivative(double t, const Vec& xbar) const;

  // sup over slices, nodes and particles of |grad_{x^i} v|.
  double max_particle_gradient(int d) const;
  // extreme second differences over diagonal axes (and cross pairs).
  std::pair<double, double> curvature_range(int d) const;

  // Serialization: JSON header + CSV payload. The header round-trips
  // bitwise, values to full double precision.
  void save(const std::string& base_path) const;
  static ValueGrid load(const std::string& base_path);

  std::vector<std::string> warnings;
  bool decomposition_check_passed = true;
  double bound_ell2 = 0.0;  // (1+T)K recorded by the solver

 private:
  friend ValueGrid solve_bellman(const ProblemSpec&, const MollifiedCoefficients&,
                                 const GridSpec&);
  double lattice_diff(int slice, const std::vector<int>& idx, int axis) const;
  double lattice_diff2(int slice, const std::vector<int>& idx, int axis) const;
  double lattice_cross(int slice, const std::vector<int>& idx, int a1,
                       int a2) const;
  template <typename F>
  double interpolate(const Vec& xbar, F&& node_value) const;

  GridSpec spec_;
  int dn_;
  double horizon_;
  int steps_;
  double h_, dt_;
  std::int64_t node_count_;
  std::string problem_;
  int n_ = 1, m_ = 0;
  std::vector<double> values_;
};

// Explicit upwind scheme for the Bellman equation with per-particle
// decomposition of the Hamiltonian max; cross diffusion uses the standard
// 4-point mixed stencil. Capped at dn <= 3.
ValueGrid solve_bellman(const ProblemSpec& p, const MollifiedCoefficients& mc,
                        const GridSpec& grid);

struct GradientScalingReport {
  std::vector<int> n_values;
  std::vector<double> max_gradients;  // max_i sup |grad_{x^i} v| per n
  std::vector<double> products;       // n * max gradient
  double variation() const;           // (max - min) / min of the products
  std::string to_json() const;
};

GradientScalingReport gradient_bound_check(
    const std::vector<const ValueGrid*>& grids);

struct CurvatureReport {
  std::vector<double> eps_values;
  std::vector<double> upper;  // max second difference per eps
  std::vector<double> lower;  // min second difference per eps
  double fitted_upper_constant = 0.0;  // max over eps of upper * eps^2
  double lower_uniform_bound = 0.0;    // min over eps of lower
  std::string to_json() const;
};

CurvatureReport second_derivative_bound_check(
    const std::vector<const ValueGrid*>& grids);

}  // namespace mfc
