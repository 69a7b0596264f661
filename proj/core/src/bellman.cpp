#include "mfc/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "mfc/parallel.hpp"
#include "mfc/rng.hpp"
#include "mfc/version.hpp"

namespace mfc {

DiffusionMatrix assemble_q(const ProblemSpec& p, int n, double t,
                           const Vec& xbar, const std::vector<Vec>& abar,
                           double eps) {
  const int d = p.d;
  if (static_cast<int>(abar.size()) != n)
    throw std::invalid_argument("assemble_q: one action per particle required");
  if (xbar.size() != n * d)
    throw std::invalid_argument("assemble_q: xbar must lie in R^{dn}");

  Mat q = Mat::Zero(n * d, n * d);
  Mat stacked(n * d, d);
  for (int i = 0; i < n; ++i) {
    const Vec xi = xbar.segment(i * d, d);
    const Mat s = p.sigma(t, xi, abar[i]);
    q.block(i * d, i * d, d, d) = s * s.transpose();
    stacked.middleRows(i * d, d) = p.sigma0(t, xi);
  }
  q += eps * eps * Mat::Identity(n * d, n * d);
  q += stacked * stacked.transpose();

  DiffusionMatrix out;
  out.symmetry_error = (q - q.transpose()).cwiseAbs().maxCoeff();
  out.q = 0.5 * (q + q.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(out.q);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  return out;
}

ValueGrid::ValueGrid(GridSpec spec, int dn, double horizon, int steps,
                     std::string problem, int n, int m)
    : spec_(spec),
      dn_(dn),
      horizon_(horizon),
      steps_(steps),
      h_(2.0 * spec.radius / (spec.nodes_per_axis - 1)),
      dt_(horizon / steps),
      problem_(std::move(problem)),
      n_(n),
      m_(m) {
  node_count_ = 1;
  for (int a = 0; a < dn_; ++a) node_count_ *= spec_.nodes_per_axis;
  values_.assign(static_cast<std::size_t>(steps_ + 1) * node_count_, 0.0);
}

int ValueGrid::slice_of(double t, bool allow_interpolation) const {
  const double s = t / dt_;
  const int k = std::clamp(static_cast<int>(std::lround(s)), 0, steps_);
  if (std::abs(t - k * dt_) <= 1e-9 * std::max(horizon_, 1.0)) return k;
  if (!allow_interpolation)
    throw std::invalid_argument(
        "ValueGrid: t = " + std::to_string(t) +
        " is not on the time lattice (dt = " + std::to_string(dt_) +
        "); pass the interpolation flag to allow it");
  return k;
}

namespace {

inline std::int64_t flat_index(const std::vector<int>& idx, int N) {
  std::int64_t f = 0;
  for (int a = static_cast<int>(idx.size()) - 1; a >= 0; --a)
    f = f * N + idx[a];
  return f;
}

}  // namespace

double ValueGrid::lattice_diff(int slice, const std::vector<int>& idx,
                               int axis) const {
  const int N = spec_.nodes_per_axis;
  std::vector<int> lo = idx, hi = idx;
  lo[axis] = std::max(idx[axis] - 1, 0);
  hi[axis] = std::min(idx[axis] + 1, N - 1);
  const int span = hi[axis] - lo[axis];
  if (span == 0) return 0.0;
  return (at(slice, flat_index(hi, N)) - at(slice, flat_index(lo, N))) /
         (span * h_);
}

double ValueGrid::lattice_diff2(int slice, const std::vector<int>& idx,
                                int axis) const {
  const int N = spec_.nodes_per_axis;
  std::vector<int> lo = idx, hi = idx;
  lo[axis] = std::max(idx[axis] - 1, 0);
  hi[axis] = std::min(idx[axis] + 1, N - 1);
  // Copy-out ghost values: a clamped neighbor contributes its own node.
  return (at(slice, flat_index(hi, N)) - 2.0 * at(slice, flat_index(idx, N)) +
          at(slice, flat_index(lo, N))) /
         (h_ * h_);
}

double ValueGrid::lattice_cross(int slice, const std::vector<int>& idx, int a1,
                                int a2) const {
  const int N = spec_.nodes_per_axis;
  std::vector<int> work = idx;
  const int i_lo = std::max(idx[a1] - 1, 0), i_hi = std::min(idx[a1] + 1, N - 1);
  const int j_lo = std::max(idx[a2] - 1, 0), j_hi = std::min(idx[a2] + 1, N - 1);
  const int si = i_hi - i_lo, sj = j_hi - j_lo;
  if (si == 0 || sj == 0) return 0.0;
  auto v = [&](int ia, int ja) {
    work[a1] = ia;
    work[a2] = ja;
    return at(slice, flat_index(work, N));
  };
  return (v(i_hi, j_hi) + v(i_lo, j_lo) - v(i_hi, j_lo) - v(i_lo, j_hi)) /
         (si * sj * h_ * h_);
}

template <typename F>
double ValueGrid::interpolate(const Vec& xbar, F&& node_value) const {
  const int N = spec_.nodes_per_axis;
  std::vector<int> base(dn_);
  std::vector<double> frac(dn_);
  for (int a = 0; a < dn_; ++a) {
    const double s = (xbar[a] + spec_.radius) / h_;
    if (s < -1e-9 || s > N - 1 + 1e-9)
      throw std::out_of_range("ValueGrid: query outside the grid box on axis " +
                              std::to_string(a) + " (coordinate " +
                              std::to_string(xbar[a]) + ")");
    int i0 = static_cast<int>(std::floor(s));
    i0 = std::clamp(i0, 0, N - 2);
    base[a] = i0;
    frac[a] = std::clamp(s - i0, 0.0, 1.0);
  }
  double acc = 0.0;
  std::vector<int> idx(dn_);
  for (int corner = 0; corner < (1 << dn_); ++corner) {
    double w = 1.0;
    for (int a = 0; a < dn_; ++a) {
      const bool hi = corner & (1 << a);
      w *= hi ? frac[a] : 1.0 - frac[a];
      idx[a] = base[a] + (hi ? 1 : 0);
    }
    if (w != 0.0) acc += w * node_value(idx);
  }
  return acc;
}

double ValueGrid::value(double t, const Vec& xbar, bool interp_time) const {
  const int N = spec_.nodes_per_axis;
  auto eval_at = [&](int slice) {
    return interpolate(xbar, [&](const std::vector<int>& idx) {
      return at(slice, flat_index(idx, N));
    });
  };
  if (!interp_time) return eval_at(slice_of(t));
  const int k0 = std::clamp(static_cast<int>(std::floor(t / dt_)), 0, steps_ - 1);
  const double lam = std::clamp(t / dt_ - k0, 0.0, 1.0);
  return (1.0 - lam) * eval_at(k0) + lam * eval_at(k0 + 1);
}

Vec ValueGrid::grad_particle(double t, const Vec& xbar, int i, int d,
                             bool interp_time) const {
  auto eval_at = [&](int slice) {
    Vec g(d);
    for (int c = 0; c < d; ++c)
      g[c] = interpolate(xbar, [&](const std::vector<int>& idx) {
        return lattice_diff(slice, idx, i * d + c);
      });
    return g;
  };
  if (!interp_time) return eval_at(slice_of(t));
  const int k0 = std::clamp(static_cast<int>(std::floor(t / dt_)), 0, steps_ - 1);
  const double lam = std::clamp(t / dt_ - k0, 0.0, 1.0);
  return (1.0 - lam) * eval_at(k0) + lam * eval_at(k0 + 1);
}

Mat ValueGrid::hess_particle(double t, const Vec& xbar, int i, int j, int d,
                             bool interp_time) const {
  auto eval_at = [&](int slice) {
    Mat hess(d, d);
    for (int c = 0; c < d; ++c)
      for (int c2 = 0; c2 < d; ++c2) {
        const int a1 = i * d + c, a2 = j * d + c2;
        hess(c, c2) = interpolate(xbar, [&](const std::vector<int>& idx) {
          return a1 == a2 ? lattice_diff2(slice, idx, a1)
                          : lattice_cross(slice, idx, a1, a2);
        });
      }
    return hess;
  };
  if (!interp_time) return eval_at(slice_of(t));
  const int k0 = std::clamp(static_cast<int>(std::floor(t / dt_)), 0, steps_ - 1);
  const double lam = std::clamp(t / dt_ - k0, 0.0, 1.0);
  return (1.0 - lam) * eval_at(k0) + lam * eval_at(k0 + 1);
}

double ValueGrid::time_derivative(double t, const Vec& xbar) const {
  const int k = slice_of(t, true);
  const int lo = std::max(k - 1, 0), hi = std::min(k + 1, steps_);
  return (value(hi * dt_, xbar) - value(lo * dt_, xbar)) / ((hi - lo) * dt_);
}

double ValueGrid::max_particle_gradient(int d) const {
  const int N = spec_.nodes_per_axis;
  const int n = dn_ / d;
  double best = 0.0;
  std::vector<int> idx(dn_, 0);
  for (int slice = 0; slice <= steps_; ++slice) {
    std::fill(idx.begin(), idx.end(), 0);
    for (std::int64_t node = 0; node < node_count_; ++node) {
      for (int i = 0; i < n; ++i) {
        double norm_sq = 0.0;
        for (int c = 0; c < d; ++c) {
          const double g = lattice_diff(slice, idx, i * d + c);
          norm_sq += g * g;
        }
        best = std::max(best, norm_sq);
      }
      int a = 0;
      while (a < dn_ && ++idx[a] == N) idx[a++] = 0;
    }
  }
  return std::sqrt(best);
}

std::pair<double, double> ValueGrid::curvature_range(int d) const {
  const int N = spec_.nodes_per_axis;
  double lo = 0.0, hi = 0.0;
  std::vector<int> idx(dn_, 0);
  for (int slice = 0; slice <= steps_; ++slice) {
    std::fill(idx.begin(), idx.end(), 0);
    for (std::int64_t node = 0; node < node_count_; ++node) {
      for (int a1 = 0; a1 < dn_; ++a1) {
        const double v = lattice_diff2(slice, idx, a1);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        for (int a2 = a1 + 1; a2 < dn_; ++a2) {
          const double c = lattice_cross(slice, idx, a1, a2);
          lo = std::min(lo, c);
          hi = std::max(hi, c);
        }
      }
      int a = 0;
      while (a < dn_ && ++idx[a] == N) idx[a++] = 0;
    }
  }
  (void)d;
  return {lo, hi};
}

void ValueGrid::save(const std::string& base_path) const {
  nlohmann::json header;
  header["format"] = "mfc-value-grid-v1";
  header["library_version"] = kLibraryVersion;
  header["problem"] = problem_;
  header["n"] = n_;
  header["m"] = m_;
  header["dn"] = dn_;
  header["horizon"] = horizon_;
  header["steps"] = steps_;
  header["spec"] = {{"radius", spec_.radius},
                    {"nodes_per_axis", spec_.nodes_per_axis},
                    {"time_steps", spec_.time_steps},
                    {"eps", spec_.eps},
                    {"cfl_safety", spec_.cfl_safety},
                    {"boundary_warn_threshold", spec_.boundary_warn_threshold}};
  header["warnings"] = warnings;
  header["decomposition_check_passed"] = decomposition_check_passed;
  header["bound_ell2"] = bound_ell2;
  std::ofstream jf(base_path + ".json");
  if (!jf) throw std::runtime_error("ValueGrid::save: cannot open " + base_path);
  jf << header.dump(2) << "\n";

  std::ofstream cf(base_path + ".csv");
  cf << "slice,node,value\n";
  char buf[64];
  for (int k = 0; k <= steps_; ++k)
    for (std::int64_t node = 0; node < node_count_; ++node) {
      std::snprintf(buf, sizeof(buf), "%d,%lld,%.17g\n", k,
                    static_cast<long long>(node), at(k, node));
      cf << buf;
    }
}

ValueGrid ValueGrid::load(const std::string& base_path) {
  std::ifstream jf(base_path + ".json");
  if (!jf) throw std::runtime_error("ValueGrid::load: cannot open " + base_path);
  nlohmann::json header = nlohmann::json::parse(jf);
  GridSpec spec;
  spec.radius = header["spec"]["radius"];
  spec.nodes_per_axis = header["spec"]["nodes_per_axis"];
  spec.time_steps = header["spec"]["time_steps"];
  spec.eps = header["spec"]["eps"];
  spec.cfl_safety = header["spec"]["cfl_safety"];
  spec.boundary_warn_threshold = header["spec"]["boundary_warn_threshold"];
  ValueGrid vg(spec, header["dn"], header["horizon"], header["steps"],
               header["problem"], header["n"], header["m"]);
  vg.warnings = header["warnings"].get<std::vector<std::string>>();
  vg.decomposition_check_passed = header["decomposition_check_passed"];
  vg.bound_ell2 = header["bound_ell2"];

  std::ifstream cf(base_path + ".csv");
  if (!cf) throw std::runtime_error("ValueGrid::load: cannot open csv payload");
  std::string line;
  std::getline(cf, line);  // header row
  std::size_t rows = 0;
  while (std::getline(cf, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::runtime_error("ValueGrid::load: malformed csv row: " + line);
    const int k = std::stoi(line.substr(0, c1));
    const long long node = std::stoll(line.substr(c1 + 1, c2 - c1 - 1));
    if (k < 0 || k > vg.steps() || node < 0 || node >= vg.nodes())
      throw std::runtime_error("ValueGrid::load: csv row outside the lattice");
    vg.at(k, node) = std::strtod(line.c_str() + c2 + 1, nullptr);
    ++rows;
  }
  if (rows != static_cast<std::size_t>(vg.steps() + 1) * vg.nodes())
    throw std::runtime_error("ValueGrid::load: csv payload incomplete");
  return vg;
}

namespace {

struct CoefficientTables {
  // layout: ((node * n + i) * A + a) for f; * d for b; * d * d for s2
  std::vector<double> f, b, s2, s0;  // s0: (node * n + i) * d * d
};

}  // namespace

ValueGrid solve_bellman(const ProblemSpec& p, const MollifiedCoefficients& mc,
                        const GridSpec& grid) {
  p.validate();
  const int d = p.d;
  const int n = mc.n();
  const int dn = d * n;
  if (dn > 3)
    throw std::invalid_argument(
        "solve_bellman: dense solver capped at dn <= 3, got dn = " +
        std::to_string(dn));
  if (grid.nodes_per_axis < 5)
    throw std::invalid_argument("solve_bellman: needs >= 5 nodes per axis");
  const int N = grid.nodes_per_axis;
  const int A = static_cast<int>(p.control_set.size());
  std::int64_t node_count = 1;
  for (int a = 0; a < dn; ++a) node_count *= N;
  const double h = 2.0 * grid.radius / (N - 1);
  const double eps = grid.eps;

  auto decode = [&](std::int64_t node, std::vector<int>& idx) {
    for (int a = 0; a < dn; ++a) {
      idx[a] = static_cast<int>(node % N);
      node /= N;
    }
  };
  auto coord_of = [&](const std::vector<int>& idx, Vec& xbar) {
    for (int a = 0; a < dn; ++a) xbar[a] = -grid.radius + idx[a] * h;
  };

  CoefficientTables tab;
  tab.f.resize(node_count * n * A);
  tab.b.resize(node_count * n * A * d);
  tab.s2.resize(node_count * n * A * d * d);
  tab.s0.resize(node_count * n * d * d);

  auto tabulate = [&](double t) {
    parallel_for(0, static_cast<int>(node_count), grid.jobs, [&](int node) {
      std::vector<int> idx(dn);
      Vec xbar(dn);
      decode(node, idx);
      coord_of(idx, xbar);
      for (int i = 0; i < n; ++i) {
        const Vec xi = xbar.segment(i * d, d);
        const Mat s0 = p.sigma0(t, xi);
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c)
            tab.s0[((static_cast<std::int64_t>(node) * n + i) * d + r) * d + c] =
                s0(r, c);
        for (int a = 0; a < A; ++a) {
          const std::int64_t base =
              (static_cast<std::int64_t>(node) * n + i) * A + a;
          tab.f[base] = mc.f_i(i, t, xbar, p.control_set[a]);
          const Vec bi = mc.b_i(i, t, xbar, p.control_set[a]);
          for (int c = 0; c < d; ++c) tab.b[base * d + c] = bi[c];
          const Mat s = p.sigma(t, xi, p.control_set[a]);
          const Mat ss = s * s.transpose();
          for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c)
              tab.s2[(base * d + r) * d + c] = ss(r, c);
        }
      }
    });
  };

  // CFL bound from the tabulated coefficients; for time-dependent problems
  // sample a few times and keep the worst.
  std::vector<double> sample_times = {p.T};
  if (!p.time_invariant)
    sample_times = {p.T, 0.75 * p.T, 0.5 * p.T, 0.25 * p.T, 0.0};
  double l_max = 0.0;
  for (double ts : sample_times) {
    tabulate(ts);
    std::vector<double> node_bound(node_count, 0.0);
    parallel_for(0, static_cast<int>(node_count), grid.jobs, [&](int node) {
      double L = 0.0;
      for (int i = 0; i < n; ++i) {
        const std::int64_t s0_base = (static_cast<std::int64_t>(node) * n + i) * d * d;
        double worst_action = 0.0;
        for (int a = 0; a < A; ++a) {
          const std::int64_t base =
              (static_cast<std::int64_t>(node) * n + i) * A + a;
          double contrib = 0.0;
          for (int r = 0; r < d; ++r) {
            double qrr = tab.s2[(base * d + r) * d + r] + eps * eps;
            for (int k = 0; k < d; ++k)
              qrr += tab.s0[s0_base + r * d + k] * tab.s0[s0_base + r * d + k];
            contrib += qrr / (h * h) + std::abs(tab.b[base * d + r]) / h;
            for (int c = 0; c < d; ++c) {
              if (c == r) continue;
              double qrc = tab.s2[(base * d + r) * d + c];
              for (int k = 0; k < d; ++k)
                qrc += tab.s0[s0_base + r * d + k] * tab.s0[s0_base + c * d + k];
              contrib += std::abs(qrc) / (2.0 * h * h);
            }
          }
          worst_action = std::max(worst_action, contrib);
        }
        L += worst_action;
        for (int j = 0; j < n; ++j) {
          if (j == i) continue;
          const std::int64_t s0j = (static_cast<std::int64_t>(node) * n + j) * d * d;
          for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) {
              double qij = 0.0;
              for (int k = 0; k < d; ++k)
                qij += tab.s0[s0_base + r * d + k] * tab.s0[s0j + c * d + k];
              L += std::abs(qij) / (2.0 * h * h);
            }
        }
      }
      node_bound[node] = L;
    });
    for (double v : node_bound) l_max = std::max(l_max, v);
  }
  if (l_max <= 0.0) l_max = 1.0 / p.T;

  const double dt_bound = grid.cfl_safety / l_max;
  int steps = grid.time_steps;
  if (steps <= 0) {
    steps = std::max(1, static_cast<int>(std::ceil(p.T / dt_bound)));
  } else if (p.T / steps > dt_bound) {
    throw std::invalid_argument(
        "solve_bellman: CFL violation, requested dt = " +
        std::to_string(p.T / steps) + " exceeds the stable bound " +
        std::to_string(dt_bound));
  }
  if (steps > 200000)
    throw std::invalid_argument(
        "solve_bellman: CFL forces more than 2e5 time steps; coarsen the grid");

  GridSpec stamped = grid;
  ValueGrid vg(stamped, dn, p.T, steps, p.name, n, mc.m());
  vg.bound_ell2 = (1.0 + p.T) * p.K;
  const double dt = vg.dt();

  // Terminal slice: exact mollified terminal cost at the nodes.
  parallel_for(0, static_cast<int>(node_count), grid.jobs, [&](int node) {
    std::vector<int> idx(dn);
    Vec xbar(dn);
    decode(node, idx);
    coord_of(idx, xbar);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += mc.g_i(i, xbar);
    vg.at(steps, node) = acc / n;
  });

  // Boundary sufficiency: large variation of the terminal data across the
  // outermost cells signals a box that truncates visibly.
  {
    double worst = 0.0;
    std::vector<int> idx(dn);
    for (std::int64_t node = 0; node < node_count; ++node) {
      decode(node, idx);
      for (int a = 0; a < dn; ++a) {
        if (idx[a] == 0 || idx[a] == N - 1) {
          std::vector<int> inner = idx;
          inner[a] += idx[a] == 0 ? 1 : -1;
          worst = std::max(worst, std::abs(vg.at(steps, node) -
                                           vg.at(steps, flat_index(inner, N))));
        }
      }
    }
    if (worst > grid.boundary_warn_threshold)
      vg.warnings.push_back(
          "terminal value varies by " + std::to_string(worst) +
          " across the boundary cells; the box may be too small");
  }

  // Ensure the tables correspond to the terminal time before stepping.
  if (!p.time_invariant) tabulate(p.T);

  std::vector<std::pair<int, int>> cross_axes;
  for (int a1 = 0; a1 < dn; ++a1)
    for (int a2 = a1 + 1; a2 < dn; ++a2) cross_axes.emplace_back(a1, a2);

  auto hamiltonian = [&](int slice, std::int64_t node,
                         const std::vector<int>& idx, double* per_particle_best,
                         const double* f_t, const double* b_t,
                         const double* s2_t, const double* s0_t) {
    // Upwind differences and second differences along every axis.
    double dplus[3], dminus[3], d2[3];
    const double u0 = vg.at(slice, node);
    std::vector<int> work = idx;
    for (int a = 0; a < dn; ++a) {
      const int save = idx[a];
      double up = u0, um = u0;
      if (save + 1 <= N - 1) {
        work[a] = save + 1;
        up = vg.at(slice, flat_index(work, N));
      }
      if (save - 1 >= 0) {
        work[a] = save - 1;
        um = vg.at(slice, flat_index(work, N));
      }
      work[a] = save;
      dplus[a] = (up - u0) / h;
      dminus[a] = (u0 - um) / h;
      d2[a] = (up - 2.0 * u0 + um) / (h * h);
    }

    double H = 0.0;
    for (int i = 0; i < n; ++i) {
      const std::int64_t s0_base = (static_cast<std::int64_t>(node) * n + i) * d * d;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        const std::int64_t base = (static_cast<std::int64_t>(node) * n + i) * A + a;
        double val = f_t[base] / n;
        for (int r = 0; r < d; ++r) {
          const double br = b_t[base * d + r];
          val += br * (br >= 0.0 ? dplus[i * d + r] : dminus[i * d + r]);
          double qrr = s2_t[(base * d + r) * d + r] + eps * eps;
          for (int k = 0; k < d; ++k)
            qrr += s0_t[s0_base + r * d + k] * s0_t[s0_base + r * d + k];
          val += 0.5 * qrr * d2[i * d + r];
          for (int c = r + 1; c < d; ++c) {
            double qrc = s2_t[(base * d + r) * d + c];
            for (int k = 0; k < d; ++k)
              qrc += s0_t[s0_base + r * d + k] * s0_t[s0_base + c * d + k];
            val += qrc * vg.lattice_cross(slice, idx, i * d + r, i * d + c);
          }
        }
        if (val > best) best = val;
        if (per_particle_best) per_particle_best[i * A + a] = val;
      }
      H += best;
    }
    // Common-noise coupling between distinct particles (action independent).
    for (int i = 0; i < n; ++i) {
      const std::int64_t s0i = (static_cast<std::int64_t>(node) * n + i) * d * d;
      for (int j = i + 1; j < n; ++j) {
        const std::int64_t s0j = (static_cast<std::int64_t>(node) * n + j) * d * d;
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c) {
            double qij = 0.0;
            for (int k = 0; k < d; ++k)
              qij += s0_t[s0i + r * d + k] * s0_t[s0j + c * d + k];
            if (qij != 0.0)
              H += qij * vg.lattice_cross(slice, idx, i * d + r, j * d + c);
          }
      }
    }
    return H;
  };

  for (int k = steps - 1; k >= 0; --k) {
    const double t_known = (k + 1) * dt;
    if (!p.time_invariant && k != steps - 1) tabulate(t_known);
    parallel_for(0, static_cast<int>(node_count), grid.jobs, [&](int node) {
      std::vector<int> idx(dn);
      decode(node, idx);
      const double H = hamiltonian(k + 1, node, idx, nullptr, tab.f.data(),
                                   tab.b.data(), tab.s2.data(), tab.s0.data());
      vg.at(k, node) = vg.at(k + 1, node) + dt * H;
    });
  }

  // Per-particle decomposition must match the joint maximization exactly:
  // each summand depends on its own action only.
  {
    CounterRng rng(CounterRng::derive_key(0xBE11, StreamRole::Probe));
    std::vector<double> per(n * A);
    std::vector<int> idx(dn);
    bool ok = true;
    const int slice = std::max(steps / 2, 1);
    for (int trial = 0; trial < 100; ++trial) {
      const std::int64_t node =
          static_cast<std::int64_t>(rng.uniform() * node_count) % node_count;
      decode(node, idx);
      const double decomposed =
          hamiltonian(slice, node, idx, per.data(), tab.f.data(), tab.b.data(),
                      tab.s2.data(), tab.s0.data());
      // joint max over A^n, summed in particle order
      std::vector<int> combo(n, 0);
      double joint_best = -std::numeric_limits<double>::infinity();
      while (true) {
        double v = 0.0;
        for (int i = 0; i < n; ++i) v += per[i * A + combo[i]];
        if (v > joint_best) joint_best = v;
        int c = 0;
        while (c < n && ++combo[c] == A) combo[c++] = 0;
        if (c == n) break;
      }
      double decomposed_sum = 0.0;
      for (int i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) best = std::max(best, per[i * A + a]);
        decomposed_sum += best;
      }
      (void)decomposed;
      if (decomposed_sum != joint_best) {
        ok = false;
        break;
      }
    }
    vg.decomposition_check_passed = ok;
    if (!ok)
      vg.warnings.push_back(
          "per-particle decomposition mismatch against joint maximization");
  }

  {
    double max_abs = 0.0;
    for (int k2 = 0; k2 <= steps; ++k2)
      for (std::int64_t node = 0; node < node_count; ++node)
        max_abs = std::max(max_abs, std::abs(vg.at(k2, node)));
    if (max_abs > vg.bound_ell2 + 1e-9)
      vg.warnings.push_back("value exceeds the (1+T)K bound: " +
                            std::to_string(max_abs));
  }
  return vg;
}

double GradientScalingReport::variation() const {
  if (products.empty()) return 0.0;
  const double lo = *std::min_element(products.begin(), products.end());
  const double hi = *std::max_element(products.begin(), products.end());
  return lo > 0.0 ? (hi - lo) / lo : 0.0;
}

std::string GradientScalingReport::to_json() const {
  nlohmann::json j;
  j["n_values"] = n_values;
  j["max_gradients"] = max_gradients;
  j["products"] = products;
  j["variation"] = variation();
  return j.dump(2);
}

GradientScalingReport gradient_bound_check(
    const std::vector<const ValueGrid*>& grids) {
  GradientScalingReport rep;
  for (const auto* vg : grids) {
    const int n = vg->n_particles();
    const int d = vg->dn() / n;
    const double g = vg->max_particle_gradient(d);
    rep.n_values.push_back(n);
    rep.max_gradients.push_back(g);
    rep.products.push_back(n * g);
  }
  return rep;
}

std::string CurvatureReport::to_json() const {
  nlohmann::json j;
  j["eps_values"] = eps_values;
  j["upper"] = upper;
  j["lower"] = lower;
  j["fitted_upper_constant"] = fitted_upper_constant;
  j["lower_uniform_bound"] = lower_uniform_bound;
  return j.dump(2);
}

CurvatureReport second_derivative_bound_check(
    const std::vector<const ValueGrid*>& grids) {
  CurvatureReport rep;
  for (const auto* vg : grids) {
    const double eps = vg->spec().eps;
    if (!(eps > 0.0))
      throw std::invalid_argument(
          "second_derivative_bound_check: requires eps > 0 grids");
    const int n = vg->n_particles();
    const auto [lo, hi] = vg->curvature_range(vg->dn() / n);
    rep.eps_values.push_back(eps);
    rep.lower.push_back(lo);
    rep.upper.push_back(hi);
    rep.fitted_upper_constant =
        std::max(rep.fitted_upper_constant, hi * eps * eps);
    rep.lower_uniform_bound = std::min(rep.lower_uniform_bound, lo);
  }
  return rep;
}

}  // namespace mfc
