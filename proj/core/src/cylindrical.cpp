#include "mfc/cylindrical.hpp"

#include <cmath>
#include <stdexcept>

namespace mfc {

CylindricalFunctional::CylindricalFunctional(std::string name,
                                             std::vector<Inner> inner,
                                             Outer outer,
                                             double growth_constant)
    : name_(std::move(name)),
      inner_(std::move(inner)),
      outer_(std::move(outer)),
      growth_constant_(growth_constant) {
  if (inner_.empty())
    throw std::invalid_argument("CylindricalFunctional: k >= 1 required");
}

Vec CylindricalFunctional::integrals(const DiscreteMeasure& mu) const {
  Vec z = Vec::Zero(k());
  for (int j = 0; j < k(); ++j)
    for (int a = 0; a < mu.size(); ++a)
      z[j] += mu.weight(a) * inner_[j].value(mu.point(a));
  return z;
}

double CylindricalFunctional::value(double t, const DiscreteMeasure& mu) const {
  return outer_.value(t, integrals(mu));
}

double CylindricalFunctional::dt(double t, const DiscreteMeasure& mu) const {
  return outer_.dt(t, integrals(mu));
}

Vec CylindricalFunctional::dmu(double t, const DiscreteMeasure& mu,
                               const Vec& x) const {
  const Vec dz = outer_.dz(t, integrals(mu));
  Vec out = Vec::Zero(x.size());
  for (int j = 0; j < k(); ++j) out += dz[j] * inner_[j].gradient(x);
  return out;
}

Mat CylindricalFunctional::dx_dmu(double t, const DiscreteMeasure& mu,
                                  const Vec& x) const {
  const Vec dz = outer_.dz(t, integrals(mu));
  Mat out = Mat::Zero(x.size(), x.size());
  for (int j = 0; j < k(); ++j) out += dz[j] * inner_[j].hessian(x);
  return out;
}

Mat CylindricalFunctional::dmu2(double t, const DiscreteMeasure& mu,
                                const Vec& x, const Vec& y) const {
  const Mat dzz = outer_.dzz(t, integrals(mu));
  Mat out = Mat::Zero(x.size(), y.size());
  for (int j = 0; j < k(); ++j) {
    const Vec gj = inner_[j].gradient(x);
    for (int l = 0; l < k(); ++l)
      out += dzz(j, l) * gj * inner_[l].gradient(y).transpose();
  }
  return out;
}

MeasureFunctionalView CylindricalFunctional::view() const {
  MeasureFunctionalView v;
  v.name = name_;
  auto self = *this;  // value copy keeps the view self-contained
  v.value = [self](double t, const DiscreteMeasure& mu) {
    return self.value(t, mu);
  };
  v.dt = [self](double t, const DiscreteMeasure& mu) { return self.dt(t, mu); };
  v.dmu = [self](double t, const DiscreteMeasure& mu, const Vec& x) {
    return self.dmu(t, mu, x);
  };
  v.dx_dmu = [self](double t, const DiscreteMeasure& mu, const Vec& x) {
    return self.dx_dmu(t, mu, x);
  };
  v.dmu2 = [self](double t, const DiscreteMeasure& mu, const Vec& x,
                  const Vec& y) { return self.dmu2(t, mu, x, y); };
  return v;
}

namespace {

CylindricalFunctional::Inner squared_norm_inner(int d) {
  return {[](const Vec& x) { return x.squaredNorm(); },
          [](const Vec& x) { return Vec(2.0 * x); },
          [d](const Vec&) { return Mat(2.0 * Mat::Identity(d, d)); }};
}

CylindricalFunctional::Inner coordinate_inner(int d, int c) {
  return {[c](const Vec& x) { return x[c]; },
          [d, c](const Vec&) {
            Vec g = Vec::Zero(d);
            g[c] = 1.0;
            return g;
          },
          [d](const Vec&) { return Mat(Mat::Zero(d, d)); }};
}

CylindricalFunctional::Inner tanh_inner(int d, int c) {
  return {[c](const Vec& x) { return std::tanh(x[c]); },
          [d, c](const Vec& x) {
            Vec g = Vec::Zero(d);
            const double th = std::tanh(x[c]);
            g[c] = 1.0 - th * th;
            return g;
          },
          [d, c](const Vec& x) {
            Mat h = Mat::Zero(d, d);
            const double th = std::tanh(x[c]);
            h(c, c) = -2.0 * th * (1.0 - th * th);
            return h;
          }};
}

CylindricalFunctional::Outer identity_outer() {
  return {[](double, const Vec& z) { return z[0]; },
          [](double, const Vec&) { return 0.0; },
          [](double, const Vec& z) { return Vec(Vec::Ones(z.size())); },
          [](double, const Vec& z) {
            return Mat(Mat::Zero(z.size(), z.size()));
          }};
}

}  // namespace

CylindricalFunctional m2_functional(int d) {
  return CylindricalFunctional("M2", {squared_norm_inner(d)}, identity_outer(),
                               2.0);
}

CylindricalFunctional mean_square_functional(int d) {
  std::vector<CylindricalFunctional::Inner> inner;
  for (int c = 0; c < d; ++c) inner.push_back(coordinate_inner(d, c));
  CylindricalFunctional::Outer outer{
      [](double, const Vec& z) { return z.squaredNorm(); },
      [](double, const Vec&) { return 0.0; },
      [](double, const Vec& z) { return Vec(2.0 * z); },
      [](double, const Vec& z) {
        return Mat(2.0 * Mat::Identity(z.size(), z.size()));
      }};
  return CylindricalFunctional("mean-square", std::move(inner), outer, 4.0);
}

CylindricalFunctional constant_functional(int d, double c) {
  CylindricalFunctional::Outer outer{
      [c](double, const Vec&) { return c; },
      [](double, const Vec&) { return 0.0; },
      [](double, const Vec& z) { return Vec(Vec::Zero(z.size())); },
      [](double, const Vec& z) { return Mat(Mat::Zero(z.size(), z.size())); }};
  return CylindricalFunctional("constant", {coordinate_inner(d, 0)},
                               std::move(outer), 0.0);
}

std::vector<CylindricalFunctional> cylindrical_catalog(int d) {
  std::vector<CylindricalFunctional> catalog;
  catalog.push_back(m2_functional(d));
  catalog.push_back(mean_square_functional(d));
  catalog.push_back(constant_functional(d, 0.7));

  // sin of a bounded statistic, time modulated
  {
    CylindricalFunctional::Outer outer{
        [](double t, const Vec& z) { return std::exp(-t) * std::sin(z[0]); },
        [](double t, const Vec& z) { return -std::exp(-t) * std::sin(z[0]); },
        [](double t, const Vec& z) {
          Vec g(z.size());
          g[0] = std::exp(-t) * std::cos(z[0]);
          return g;
        },
        [](double t, const Vec& z) {
          Mat h = Mat::Zero(z.size(), z.size());
          h(0, 0) = -std::exp(-t) * std::sin(z[0]);
          return h;
        }};
    catalog.emplace_back("sin-tanh-decay",
                         std::vector<CylindricalFunctional::Inner>{
                             tanh_inner(d, 0)},
                         outer, 1.0);
  }

  // coupling two statistics: z1 * z2 with mixed second derivatives
  {
    std::vector<CylindricalFunctional::Inner> inner{tanh_inner(d, 0),
                                                    squared_norm_inner(d)};
    CylindricalFunctional::Outer outer{
        [](double, const Vec& z) { return z[0] * z[1]; },
        [](double, const Vec&) { return 0.0; },
        [](double, const Vec& z) {
          Vec g(2);
          g[0] = z[1];
          g[1] = z[0];
          return g;
        },
        [](double, const Vec&) {
          Mat h = Mat::Zero(2, 2);
          h(0, 1) = 1.0;
          h(1, 0) = 1.0;
          return h;
        }};
    catalog.emplace_back("tanh-times-m2", std::move(inner), outer, 10.0);
  }
  return catalog;
}

}  // namespace mfc
