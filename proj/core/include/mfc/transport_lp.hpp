#pragma once

#include <Eigen/Dense>

namespace mfc::detail {

// Solves the balanced transportation problem
//   min sum_{ij} cost(i,j) * plan(i,j)
//   s.t. plan * 1 = supply, plan^T * 1 = demand, plan >= 0
// by the transportation simplex on the dense cost matrix, returning the
// optimal cost. Supplies and demands must be positive and sum to the same
// total (up to rounding); the problem is always feasible.
double solve_transport(const Eigen::MatrixXd& cost,
                       const Eigen::VectorXd& supply,
                       const Eigen::VectorXd& demand);

}  // namespace mfc::detail
