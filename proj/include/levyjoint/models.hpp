#pragma once
// Levy models with characteristic exponent psi analytic on a union of a
// horizontal strip and a symmetric cone around the real axis:
//
//   E[e^{i xi X_t}] = e^{-t psi(xi)},   psi(xi) = -i mu xi + psi0(xi),
//
// with psi0(rho e^{i phi}) ~ c_inf e^{i nu phi} rho^nu as rho -> infinity
// inside the cone. The analyticity record drives every contour choice.

#include <complex>
#include <memory>
#include <string>

namespace levyjoint {

using cd = std::complex<double>;

struct AnalyticityData {
  double mu_minus = 0.0;     // strip i(mu_minus, mu_plus), mu_minus < 0 < mu_plus
  double mu_plus = 0.0;
  double gamma_minus = 0.0;  // cone of analyticity: arg in (gamma_minus, gamma_plus)
  double gamma_plus = 0.0;
  double gammap_minus = 0.0; // inner cone where Re psi grows like |xi|^nu
  double gammap_plus = 0.0;
  double nu = 0.0;           // order
  double c_inf = 0.0;        // modulus scale of psi0 at infinity (c_inf(0) real here)
};

class LevyModel {
 public:
  virtual ~LevyModel() = default;
  virtual cd psi(cd xi) const = 0;
  virtual cd psi0(cd xi) const = 0;  // psi without the linear drift term
  virtual double drift() const = 0;  // mu
  virtual AnalyticityData analyticity() const = 0;
  virtual double second_moment() const = 0;  // psi''(0) = Var X_1
  virtual std::string describe() const = 0;
};

// KoBoL / CGMY family, order nu in (0,2) excluding 1:
//   psi0(xi) = c Gamma(-nu) [ (-lambda_-)^nu - (-lambda_- - i xi)^nu
//                             + lambda_+^nu  - (lambda_+ + i xi)^nu ],
// lambda_- < 0 < lambda_+. Powers are principal-branch; the two branch cuts
// i(-i inf, lambda_-] and i[lambda_+, +i inf) lie outside the strip+cone.
class KobolModel : public LevyModel {
 public:
  // Specify the intensity c directly...
  static KobolModel with_c(double nu, double lambda_plus, double lambda_minus, double mu,
                           double c);
  // ...or calibrate c from the second moment m2 = psi''(0):
  //   c = m2 / ( Gamma(2-nu) ( (-lambda_-)^{nu-2} + lambda_+^{nu-2} ) ).
  static KobolModel with_second_moment(double nu, double lambda_plus, double lambda_minus,
                                       double mu, double m2);

  cd psi(cd xi) const override;
  cd psi0(cd xi) const override;
  double drift() const override { return mu_; }
  AnalyticityData analyticity() const override;
  double second_moment() const override;
  std::string describe() const override;

  double nu() const { return nu_; }
  double c() const { return c_; }
  double lambda_plus() const { return lp_; }
  double lambda_minus() const { return lm_; }

 private:
  KobolModel(double nu, double lp, double lm, double mu, double c);
  double nu_, lp_, lm_, mu_, c_;
  double gamma_minus_nu_;  // Gamma(-nu), via the reflection formula
};

// Brownian motion with drift: psi(xi) = sigma^2 xi^2 / 2 - i mu xi.
// Entire exponent; the strip is reported clamped to +-kStripClamp.
class BrownianModel : public LevyModel {
 public:
  static constexpr double kStripClamp = 1e6;

  BrownianModel(double sigma, double mu);

  cd psi(cd xi) const override;
  cd psi0(cd xi) const override;
  double drift() const override { return mu_; }
  AnalyticityData analyticity() const override;
  double second_moment() const override { return sigma_ * sigma_; }
  std::string describe() const override;

  double sigma() const { return sigma_; }

 private:
  double sigma_, mu_;
};

// Gamma(-nu) for nu in (0,2)\{1}, via Gamma(-nu) = -pi / (sin(pi nu) Gamma(1+nu)).
double gamma_minus_nu(double nu);

}  // namespace levyjoint
