#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mfc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Finitely supported probability measure on R^d. Atoms are the columns of
// `points`; weights are nonnegative and sum to one. Immutable after
// construction.
class DiscreteMeasure {
 public:
  // Constructors renormalize when |sum(w) - 1| <= 1e-9 and reject otherwise.
  DiscreteMeasure(Mat points, Vec weights);

  static DiscreteMeasure dirac(const Vec& x);
  // Uniform weights 1/n on the given atoms.
  static DiscreteMeasure empirical(const std::vector<Vec>& samples);

  int dim() const { return static_cast<int>(points_.rows()); }
  int size() const { return static_cast<int>(points_.cols()); }
  const Mat& points() const { return points_; }
  const Vec& weights() const { return weights_; }
  Vec point(int k) const { return points_.col(k); }
  double weight(int k) const { return weights_[k]; }

  Vec mean() const;

  // Merges atoms closer than `tol` (summing weights) and drops zero-weight
  // atoms. Used when testing identity of indiscernibles.
  DiscreteMeasure merged(double tol = 1e-12) const;

  std::string to_json() const;
  static DiscreteMeasure from_json(const std::string& text);
  // One atom per row: x_1,...,x_d,weight.
  std::string to_csv() const;

 private:
  Mat points_;   // d x n
  Vec weights_;  // n
};

// Moment ball V^{p1,p2}_K = { mu : M_{p2}(mu) <= K }, compact under W_{p1}.
struct MomentBall {
  double p1 = 1.0;
  double p2 = 2.0;
  double bound = 1.0;  // K

  MomentBall(double p1_, double p2_, double bound_);
};

// p-th moment  M_p(mu) = sum_k w_k |x_k|^p,  p >= 1.
double moment(const DiscreteMeasure& mu, double p);

// Exact W_q on R^1 via the monotone (quantile) coupling with weight
// splitting. Rejects d != 1 and q < 1.
double wasserstein_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                      double q);

// Exact W_q in any dimension by solving the discrete optimal-transport LP.
// Intended for supports up to ~200 atoms each.
double wasserstein_lp(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                      double q);

bool in_moment_ball(const DiscreteMeasure& mu, const MomentBall& ball);

}  // namespace mfc
