#include "levyjoint/models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace levyjoint {

namespace {
constexpr double kPi = std::numbers::pi;

void validate_kobol(double nu, double lp, double lm) {
  if (!(nu > 0.0 && nu < 2.0))
    throw std::invalid_argument("KoBoL order nu must lie in (0,2); got nu=" +
                                std::to_string(nu));
  if (std::abs(nu - 1.0) < 1e-9)
    throw std::invalid_argument(
        "KoBoL order nu=1 needs a logarithmic exponent form that is not implemented; "
        "use nu away from 1");
  if (!(lm < 0.0 && 0.0 < lp))
    throw std::invalid_argument("KoBoL requires lambda_- < 0 < lambda_+");
}
}  // namespace

double gamma_minus_nu(double nu) {
  // Reflection: Gamma(-nu) Gamma(1+nu) = -pi / sin(pi nu). Both factors on the
  // right are benign for nu in (0,2)\{1}; tgamma(1+nu) is fully accurate there.
  return -kPi / (std::sin(kPi * nu) * std::tgamma(1.0 + nu));
}

KobolModel::KobolModel(double nu, double lp, double lm, double mu, double c)
    : nu_(nu), lp_(lp), lm_(lm), mu_(mu), c_(c), gamma_minus_nu_(gamma_minus_nu(nu)) {}

KobolModel KobolModel::with_c(double nu, double lp, double lm, double mu, double c) {
  validate_kobol(nu, lp, lm);
  if (!(c > 0.0)) throw std::invalid_argument("KoBoL intensity c must be positive");
  return KobolModel(nu, lp, lm, mu, c);
}

KobolModel KobolModel::with_second_moment(double nu, double lp, double lm, double mu,
                                          double m2) {
  validate_kobol(nu, lp, lm);
  if (!(m2 > 0.0)) throw std::invalid_argument("second moment m2 must be positive");
  const double denom =
      std::tgamma(2.0 - nu) * (std::pow(-lm, nu - 2.0) + std::pow(lp, nu - 2.0));
  return KobolModel(nu, lp, lm, mu, m2 / denom);
}

cd KobolModel::psi0(cd xi) const {
  const cd i{0.0, 1.0};
  const cd term_m = std::pow(cd(-lm_, 0.0), nu_) - std::pow(-lm_ - i * xi, nu_);
  const cd term_p = std::pow(cd(lp_, 0.0), nu_) - std::pow(lp_ + i * xi, nu_);
  return c_ * gamma_minus_nu_ * (term_m + term_p);
}

cd KobolModel::psi(cd xi) const { return cd(0.0, -mu_) * xi + psi0(xi); }

double KobolModel::second_moment() const {
  // psi0''(0) = c Gamma(2-nu) ( (-lambda_-)^{nu-2} + lambda_+^{nu-2} ).
  return c_ * std::tgamma(2.0 - nu_) *
         (std::pow(-lm_, nu_ - 2.0) + std::pow(lp_, nu_ - 2.0));
}

AnalyticityData KobolModel::analyticity() const {
  AnalyticityData a;
  a.mu_minus = lm_;
  a.mu_plus = lp_;
  a.gamma_minus = -kPi / 2.0;
  a.gamma_plus = kPi / 2.0;
  const double inner = std::min(kPi / 2.0, kPi / (2.0 * nu_));
  a.gammap_minus = -inner;
  a.gammap_plus = inner;
  a.nu = nu_;
  // psi0(rho e^{i phi}) ~ c_inf e^{i nu phi} rho^nu with
  // c_inf = -2 c Gamma(-nu) cos(nu pi/2)  (> 0 for nu in (0,2)\{1}).
  a.c_inf = -2.0 * c_ * gamma_minus_nu_ * std::cos(nu_ * kPi / 2.0);
  return a;
}

std::string KobolModel::describe() const {
  std::ostringstream os;
  os << "KoBoL(nu=" << nu_ << ", lambda+=" << lp_ << ", lambda-=" << lm_
     << ", mu=" << mu_ << ", c=" << c_ << ")";
  return os.str();
}

BrownianModel::BrownianModel(double sigma, double mu) : sigma_(sigma), mu_(mu) {
  if (!(sigma > 0.0)) throw std::invalid_argument("BM volatility sigma must be positive");
}

cd BrownianModel::psi0(cd xi) const { return 0.5 * sigma_ * sigma_ * xi * xi; }

cd BrownianModel::psi(cd xi) const { return cd(0.0, -mu_) * xi + psi0(xi); }

AnalyticityData BrownianModel::analyticity() const {
  AnalyticityData a;
  a.mu_minus = -kStripClamp;
  a.mu_plus = kStripClamp;
  a.gamma_minus = -kPi / 2.0;
  a.gamma_plus = kPi / 2.0;
  a.gammap_minus = -kPi / 4.0;  // Re xi^2 > 0 requires |arg xi| < pi/4
  a.gammap_plus = kPi / 4.0;
  a.nu = 2.0;
  a.c_inf = 0.5 * sigma_ * sigma_;
  return a;
}

std::string BrownianModel::describe() const {
  std::ostringstream os;
  os << "BM(sigma=" << sigma_ << ", mu=" << mu_ << ")";
  return os.str();
}

}  // namespace levyjoint
