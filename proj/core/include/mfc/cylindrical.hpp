#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mfc/measure.hpp"

namespace mfc {

// Shared derivative interface for smooth functionals of (t, mu): value,
// time derivative, first L-derivative, its spatial gradient, and the second
// L-derivative. Cylindrical functionals and lifted value grids both expose
// this view.
struct MeasureFunctionalView {
  std::string name;
  std::function<double(double, const DiscreteMeasure&)> value;
  std::function<double(double, const DiscreteMeasure&)> dt;
  std::function<Vec(double, const DiscreteMeasure&, const Vec&)> dmu;
  std::function<Mat(double, const DiscreteMeasure&, const Vec&)> dx_dmu;
  std::function<Mat(double, const DiscreteMeasure&, const Vec&, const Vec&)>
      dmu2;
};

// Smooth test function u(t, mu) = F(t, int phi_1 dmu, ..., int phi_k dmu)
// with closed-form inner and outer derivatives, so that
//   dmu  u (x)   = sum_j dF/dz_j grad phi_j(x)
//   dx dmu u (x) = sum_j dF/dz_j hess phi_j(x)
//   dmu2 u (x,y) = sum_{j,l} d2F/dz_j dz_l grad phi_j(x) grad phi_l(y)^T.
class CylindricalFunctional {
 public:
  struct Inner {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
    std::function<Mat(const Vec&)> hessian;
  };
  struct Outer {
    std::function<double(double, const Vec&)> value;
    std::function<double(double, const Vec&)> dt;
    std::function<Vec(double, const Vec&)> dz;
    std::function<Mat(double, const Vec&)> dzz;
  };

  CylindricalFunctional(std::string name, std::vector<Inner> inner, Outer outer,
                        double growth_constant);

  const std::string& name() const { return name_; }
  int k() const { return static_cast<int>(inner_.size()); }
  // Stored C with |dmu u(t,mu)(x)| <= C (1 + |x|) over the moment ball
  // M_2(mu) <= 4 the probes sample from. Functionals whose first derivative
  // reads a measure statistic (the squared mean, say) admit no global
  // constant over all of P_2, only one per ball.
  double growth_constant() const { return growth_constant_; }

  Vec integrals(const DiscreteMeasure& mu) const;
  double value(double t, const DiscreteMeasure& mu) const;
  double dt(double t, const DiscreteMeasure& mu) const;
  Vec dmu(double t, const DiscreteMeasure& mu, const Vec& x) const;
  Mat dx_dmu(double t, const DiscreteMeasure& mu, const Vec& x) const;
  Mat dmu2(double t, const DiscreteMeasure& mu, const Vec& x,
           const Vec& y) const;

  MeasureFunctionalView view() const;

 private:
  std::string name_;
  std::vector<Inner> inner_;
  Outer outer_;
  double growth_constant_;
};

// Second moment M_2: dmu = 2x, dx dmu = 2I, dmu2 = 0.
CylindricalFunctional m2_functional(int d);
// Squared mean |int x dmu|^2: dmu = 2 mean, dx dmu = 0, dmu2 = 2I.
CylindricalFunctional mean_square_functional(int d);
// Constant functional.
CylindricalFunctional constant_functional(int d, double c);

// Test catalog with mixed time dependence and bounded inner functions.
std::vector<CylindricalFunctional> cylindrical_catalog(int d);

}  // namespace mfc
