#include "mfc/transport_lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mfc::detail {

namespace {

// Basis of the transportation simplex: a spanning tree over m row nodes and
// n column nodes, each basic cell being one tree edge.
struct Basis {
  int m = 0, n = 0;
  std::vector<int> cell_row, cell_col;
  std::vector<double> cell_flow;
  std::vector<std::vector<int>> adj;  // node -> incident cell indices

  int node_of_row(int i) const { return i; }
  int node_of_col(int j) const { return m + j; }

  int add_cell(int i, int j, double flow) {
    const int id = static_cast<int>(cell_row.size());
    cell_row.push_back(i);
    cell_col.push_back(j);
    cell_flow.push_back(flow);
    adj[node_of_row(i)].push_back(id);
    adj[node_of_col(j)].push_back(id);
    return id;
  }

  void remove_cell(int id) {
    auto drop = [&](int node) {
      auto& list = adj[node];
      list.erase(std::find(list.begin(), list.end(), id));
    };
    drop(node_of_row(cell_row[id]));
    drop(node_of_col(cell_col[id]));
    cell_row[id] = -1;
    cell_col[id] = -1;
  }

  int other_node(int cell, int node) const {
    const int rn = node_of_row(cell_row[cell]);
    return node == rn ? node_of_col(cell_col[cell]) : rn;
  }
};

void compute_duals(const Basis& basis, const Eigen::MatrixXd& cost,
                   std::vector<double>& u, std::vector<double>& v) {
  const int m = basis.m, n = basis.n;
  std::vector<char> seen(m + n, 0);
  std::vector<int> stack;
  u.assign(m, 0.0);
  v.assign(n, 0.0);
  stack.push_back(0);
  seen[0] = 1;
  while (!stack.empty()) {
    const int node = stack.back();
    stack.pop_back();
    for (int cell : basis.adj[node]) {
      const int nb = basis.other_node(cell, node);
      if (seen[nb]) continue;
      seen[nb] = 1;
      const int i = basis.cell_row[cell];
      const int j = basis.cell_col[cell];
      if (nb < m)
        u[i] = cost(i, j) - v[j];
      else
        v[j] = cost(i, j) - u[i];
      stack.push_back(nb);
    }
  }
}

// Path between two tree nodes, returned as the list of cells along it.
std::vector<int> tree_path(const Basis& basis, int from, int to) {
  const int total = basis.m + basis.n;
  std::vector<int> parent_cell(total, -1), parent_node(total, -1);
  std::vector<char> seen(total, 0);
  std::vector<int> queue{from};
  seen[from] = 1;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const int node = queue[q];
    if (node == to) break;
    for (int cell : basis.adj[node]) {
      const int nb = basis.other_node(cell, node);
      if (seen[nb]) continue;
      seen[nb] = 1;
      parent_cell[nb] = cell;
      parent_node[nb] = node;
      queue.push_back(nb);
    }
  }
  std::vector<int> path;
  for (int node = to; node != from; node = parent_node[node])
    path.push_back(parent_cell[node]);
  std::reverse(path.begin(), path.end());
  return path;
}

// Recomputes basic flows for the given marginals by leaf elimination on the
// basis tree. Degenerate basic cells may come out at exactly zero.
void solve_tree_flows(Basis& basis, const Eigen::VectorXd& supply,
                      const Eigen::VectorXd& demand) {
  const int m = basis.m, n = basis.n;
  std::vector<double> residual(m + n);
  for (int i = 0; i < m; ++i) residual[i] = supply[i];
  for (int j = 0; j < n; ++j) residual[m + j] = demand[j];

  std::vector<int> degree(m + n, 0);
  for (int node = 0; node < m + n; ++node)
    degree[node] = static_cast<int>(basis.adj[node].size());
  std::vector<char> cell_done(basis.cell_row.size(), 0);
  std::vector<char> node_done(m + n, 0);
  std::vector<int> leaves;
  for (int node = 0; node < m + n; ++node)
    if (degree[node] == 1) leaves.push_back(node);

  while (!leaves.empty()) {
    const int node = leaves.back();
    leaves.pop_back();
    if (node_done[node]) continue;
    node_done[node] = 1;
    int cell = -1;
    for (int c : basis.adj[node])
      if (!cell_done[c]) {
        cell = c;
        break;
      }
    if (cell < 0) continue;  // root of the elimination order
    cell_done[cell] = 1;
    const double flow = residual[node];
    basis.cell_flow[cell] = flow;
    const int nb = basis.other_node(cell, node);
    residual[nb] -= flow;
    residual[node] = 0.0;
    if (--degree[nb] == 1 && !node_done[nb]) leaves.push_back(nb);
  }
}

}  // namespace

double solve_transport(const Eigen::MatrixXd& cost,
                       const Eigen::VectorXd& supply,
                       const Eigen::VectorXd& demand) {
  const int m = static_cast<int>(supply.size());
  const int n = static_cast<int>(demand.size());
  if (cost.rows() != m || cost.cols() != n)
    throw std::invalid_argument("solve_transport: cost shape mismatch");
  if (m == 0 || n == 0)
    throw std::invalid_argument("solve_transport: empty marginal");

  // Deterministic perturbation breaks degeneracy; the optimal basis of the
  // perturbed problem is optimal for the original one, whose exact flows are
  // recovered on that basis afterwards.
  const double total = supply.sum();
  const double delta = total * 1e-11 / (m + 1);
  Eigen::VectorXd ps = supply, pd = demand;
  for (int i = 0; i < m; ++i) ps[i] += delta * (i + 1);
  pd[n - 1] += delta * static_cast<double>(m) * (m + 1) / 2.0;
  pd *= ps.sum() / pd.sum();

  Basis basis;
  basis.m = m;
  basis.n = n;
  basis.adj.assign(m + n, {});

  // Northwest-corner initial basis.
  {
    Eigen::VectorXd rs = ps, rd = pd;
    int i = 0, j = 0;
    while (true) {
      const double flow = std::min(rs[i], rd[j]);
      basis.add_cell(i, j, flow);
      rs[i] -= flow;
      rd[j] -= flow;
      if (i == m - 1 && j == n - 1) break;
      if (i == m - 1)
        ++j;
      else if (j == n - 1)
        ++i;
      else if (rs[i] <= rd[j])
        ++i;
      else
        ++j;
    }
  }

  const double cost_scale = cost.cwiseAbs().maxCoeff() + 1.0;
  const double tol = 1e-13 * cost_scale;
  std::vector<double> u, v;
  const std::int64_t max_iters = 200LL * (m + n) * (m + n) + 10000;
  bool optimal = false;

  for (std::int64_t iter = 0; iter < max_iters; ++iter) {
    compute_duals(basis, cost, u, v);

    int best_i = -1, best_j = -1;
    double best_red = -tol;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double red = cost(i, j) - u[i] - v[j];
        if (red < best_red) {
          best_red = red;
          best_i = i;
          best_j = j;
        }
      }
    if (best_i < 0) {
      optimal = true;
      break;
    }

    // The entering cell closes a unique cycle; odd-position cells along the
    // tree path lose flow.
    const auto path =
        tree_path(basis, basis.node_of_col(best_j), basis.node_of_row(best_i));
    double theta = std::numeric_limits<double>::infinity();
    int leaving = -1;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      if (basis.cell_flow[path[k]] <= theta) {
        theta = basis.cell_flow[path[k]];
        leaving = path[k];
      }
    }
    if (leaving < 0) throw std::runtime_error("solve_transport: internal cycle error");

    double sign = -1.0;
    for (int cell : path) {
      basis.cell_flow[cell] += sign * theta;
      sign = -sign;
    }
    basis.remove_cell(leaving);
    basis.add_cell(best_i, best_j, theta);
  }

  if (!optimal)
    throw std::runtime_error(
        "solve_transport: pivot limit reached before optimality");

  solve_tree_flows(basis, supply, demand);
  double value = 0.0;
  for (std::size_t c = 0; c < basis.cell_flow.size(); ++c) {
    if (basis.cell_row[c] < 0) continue;
    const double flow = std::max(basis.cell_flow[c], 0.0);
    value += cost(basis.cell_row[c], basis.cell_col[c]) * flow;
  }
  return value;
}

}  // namespace mfc::detail
