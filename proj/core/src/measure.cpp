#include "mfc/measure.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mfc/transport_lp.hpp"

namespace mfc {

DiscreteMeasure::DiscreteMeasure(Mat points, Vec weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.cols() == 0)
    throw std::invalid_argument("DiscreteMeasure: needs at least one atom");
  if (points_.cols() != weights_.size())
    throw std::invalid_argument("DiscreteMeasure: points/weights size mismatch");
  if ((weights_.array() < 0.0).any())
    throw std::invalid_argument("DiscreteMeasure: negative weight");
  const double total = weights_.sum();
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument(
        "DiscreteMeasure: weights sum to " + std::to_string(total) +
        ", expected 1 within 1e-9");
  weights_ /= total;
}

DiscreteMeasure DiscreteMeasure::dirac(const Vec& x) {
  Mat pts(x.size(), 1);
  pts.col(0) = x;
  Vec w(1);
  w[0] = 1.0;
  return DiscreteMeasure(std::move(pts), std::move(w));
}

DiscreteMeasure DiscreteMeasure::empirical(const std::vector<Vec>& samples) {
  if (samples.empty())
    throw std::invalid_argument("empirical: empty sample list");
  const auto d = samples.front().size();
  Mat pts(d, static_cast<int>(samples.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (samples[k].size() != d)
      throw std::invalid_argument("empirical: inconsistent sample dimension");
    pts.col(static_cast<int>(k)) = samples[k];
  }
  Vec w = Vec::Constant(static_cast<int>(samples.size()),
                        1.0 / static_cast<double>(samples.size()));
  return DiscreteMeasure(std::move(pts), std::move(w));
}

Vec DiscreteMeasure::mean() const { return points_ * weights_; }

DiscreteMeasure DiscreteMeasure::merged(double tol) const {
  std::vector<int> rep;  // indices of representative atoms
  std::vector<double> w;
  for (int k = 0; k < size(); ++k) {
    if (weights_[k] == 0.0) continue;
    bool found = false;
    for (std::size_t r = 0; r < rep.size(); ++r) {
      if ((points_.col(k) - points_.col(rep[r])).norm() <= tol) {
        w[r] += weights_[k];
        found = true;
        break;
      }
    }
    if (!found) {
      rep.push_back(k);
      w.push_back(weights_[k]);
    }
  }
  if (rep.empty()) {  // all weights zero cannot happen (sum is one)
    rep.push_back(0);
    w.push_back(1.0);
  }
  Mat pts(dim(), static_cast<int>(rep.size()));
  Vec wv(static_cast<int>(rep.size()));
  for (std::size_t r = 0; r < rep.size(); ++r) {
    pts.col(static_cast<int>(r)) = points_.col(rep[r]);
    wv[static_cast<int>(r)] = w[r];
  }
  return DiscreteMeasure(std::move(pts), std::move(wv));
}

std::string DiscreteMeasure::to_json() const {
  nlohmann::json j;
  j["dim"] = dim();
  auto pts = nlohmann::json::array();
  auto ws = nlohmann::json::array();
  for (int k = 0; k < size(); ++k) {
    auto p = nlohmann::json::array();
    for (int c = 0; c < dim(); ++c) p.push_back(points_(c, k));
    pts.push_back(std::move(p));
    ws.push_back(weights_[k]);
  }
  j["points"] = std::move(pts);
  j["weights"] = std::move(ws);
  return j.dump();
}

DiscreteMeasure DiscreteMeasure::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const int d = j.at("dim").get<int>();
  const auto& pts = j.at("points");
  const auto& ws = j.at("weights");
  if (pts.size() != ws.size())
    throw std::invalid_argument("measure json: points/weights length mismatch");
  Mat points(d, static_cast<int>(pts.size()));
  Vec weights(static_cast<int>(ws.size()));
  for (std::size_t k = 0; k < pts.size(); ++k) {
    if (static_cast<int>(pts[k].size()) != d)
      throw std::invalid_argument("measure json: atom dimension mismatch");
    for (int c = 0; c < d; ++c) points(c, static_cast<int>(k)) = pts[k][c];
    weights[static_cast<int>(k)] = ws[k];
  }
  return DiscreteMeasure(std::move(points), std::move(weights));
}

std::string DiscreteMeasure::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  for (int c = 0; c < dim(); ++c) out << "x" << c + 1 << ",";
  out << "weight\n";
  for (int k = 0; k < size(); ++k) {
    for (int c = 0; c < dim(); ++c) out << points_(c, k) << ",";
    out << weights_[k] << "\n";
  }
  return out.str();
}

MomentBall::MomentBall(double p1_, double p2_, double bound_)
    : p1(p1_), p2(p2_), bound(bound_) {
  if (!(p2 > p1) || !(p1 >= 1.0))
    throw std::invalid_argument("MomentBall: requires p2 > p1 >= 1");
  if (!(bound > 0.0)) throw std::invalid_argument("MomentBall: requires K > 0");
}

double moment(const DiscreteMeasure& mu, double p) {
  if (p < 1.0) throw std::invalid_argument("moment: requires p >= 1");
  double acc = 0.0;
  for (int k = 0; k < mu.size(); ++k)
    acc += mu.weight(k) * std::pow(mu.point(k).norm(), p);
  return acc;
}

double wasserstein_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                      double q) {
  if (mu.dim() != 1 || nu.dim() != 1)
    throw std::invalid_argument("wasserstein_1d: measures must live on R^1");
  if (q < 1.0) throw std::invalid_argument("wasserstein_1d: requires q >= 1");

  auto sorted = [](const DiscreteMeasure& m) {
    std::vector<std::pair<double, double>> atoms(m.size());
    for (int k = 0; k < m.size(); ++k)
      atoms[k] = {m.points()(0, k), m.weight(k)};
    std::sort(atoms.begin(), atoms.end());
    return atoms;
  };
  auto a = sorted(mu);
  auto b = sorted(nu);

  double cost = 0.0;
  std::size_t i = 0, j = 0;
  double ra = a[0].second, rb = b[0].second;
  while (i < a.size() && j < b.size()) {
    const double w = std::min(ra, rb);
    cost += w * std::pow(std::abs(a[i].first - b[j].first), q);
    ra -= w;
    rb -= w;
    if (ra <= 0.0 && ++i < a.size()) ra = a[i].second;
    if (rb <= 0.0 && ++j < b.size()) rb = b[j].second;
  }
  return std::pow(cost, 1.0 / q);
}

double wasserstein_lp(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                      double q) {
  if (mu.dim() != nu.dim())
    throw std::invalid_argument("wasserstein_lp: dimension mismatch");
  if (q < 1.0) throw std::invalid_argument("wasserstein_lp: requires q >= 1");

  Eigen::MatrixXd cost(mu.size(), nu.size());
  for (int i = 0; i < mu.size(); ++i)
    for (int j = 0; j < nu.size(); ++j)
      cost(i, j) = std::pow((mu.point(i) - nu.point(j)).norm(), q);
  const double value = detail::solve_transport(cost, mu.weights(), nu.weights());
  return std::pow(std::max(value, 0.0), 1.0 / q);
}

bool in_moment_ball(const DiscreteMeasure& mu, const MomentBall& ball) {
  return moment(mu, ball.p2) <= ball.bound;
}

}  // namespace mfc
