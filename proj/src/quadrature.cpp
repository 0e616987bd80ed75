#include "levyjoint/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace levyjoint {

double trapezoid_discretization_error(double hardy_norm, double d, double zeta) {
  if (d <= 0.0 || zeta <= 0.0) throw std::invalid_argument("trapezoid error: d, zeta > 0 required");
  const double r = std::exp(-2.0 * M_PI * d / zeta);
  return hardy_norm * r / (1.0 - r);
}

double trapezoid_step_for_error(double hardy_norm, double d, double eps) {
  if (eps <= 0.0 || hardy_norm <= 0.0 || d <= 0.0)
    throw std::invalid_argument("trapezoid step: positive arguments required");
  const double ratio = eps / hardy_norm;
  // e^{-2 pi d/zeta}/(1-e^{-2 pi d/zeta}) = ratio  =>  e^{-2 pi d/zeta} = ratio/(1+ratio)
  return 2.0 * M_PI * d / std::log((1.0 + ratio) / ratio);
}

cd oscillatory_sum_direct(const std::vector<cd>& g, double a, double zeta, long j0) {
  cd s(0.0, 0.0);
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double phase = -a * static_cast<double>(j0 + static_cast<long>(j)) * zeta;
    s += std::polar(1.0, phase) * g[j];
  }
  return zeta * s;
}

bool oscillatory_sum_by_parts(const std::vector<cd>& g, double a, double zeta, long j0, int n,
                              cd* out, double resonance_eps) {
  if (n < 1 || g.size() <= static_cast<std::size_t>(n)) return false;
  const cd rot = std::polar(1.0, a * zeta);
  if (std::abs(rot - 1.0) < resonance_eps) return false;

  std::vector<cd> d(g);
  for (int k = 0; k < n; ++k) {
    for (std::size_t j = 0; j + 1 < d.size(); ++j) d[j] = d[j + 1] - d[j];
    d.pop_back();
  }
  cd s(0.0, 0.0);
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double phase = -a * static_cast<double>(j0 + static_cast<long>(j)) * zeta;
    s += std::polar(1.0, phase) * d[j];
  }
  cd denom(1.0, 0.0);
  for (int k = 0; k < n; ++k) denom *= (rot - 1.0);
  *out = zeta * s / denom;
  return true;
}

namespace {

// Kronrod-15 abscissae/weights and the embedded Gauss-7 weights on [-1,1].
constexpr double kXgk[8] = {0.991455371120813, 0.949107912342759, 0.864864423359769,
                            0.741531185599394, 0.586087235467691, 0.405845151377397,
                            0.207784955007898, 0.0};
constexpr double kWgk[8] = {0.022935322010529, 0.063092092629979, 0.104790010322250,
                            0.140653259715525, 0.169004726639267, 0.190350578064785,
                            0.204432940075298, 0.209482141084728};
constexpr double kWg[4] = {0.129484966168870, 0.279705391489277, 0.381830050505119,
                           0.417959183673469};

void gk15(const std::function<double(double)>& f, double lo, double hi, double* kronrod,
          double* err) {
  const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
  const double fc = f(c);
  double resk = kWgk[7] * fc;
  double resg = kWg[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const double x = h * kXgk[i];
    const double fsum = f(c - x) + f(c + x);
    resk += kWgk[i] * fsum;
    if (i % 2 == 1) resg += kWg[i / 2] * fsum;
  }
  *kronrod = resk * h;
  *err = std::abs((resk - resg) * h);
}

double gk_adaptive(const std::function<double(double)>& f, double lo, double hi, double tol,
                   int depth) {
  double val, err;
  gk15(f, lo, hi, &val, &err);
  if (err <= tol || depth <= 0) return val;
  const double mid = 0.5 * (lo + hi);
  return gk_adaptive(f, lo, mid, 0.5 * tol, depth - 1) +
         gk_adaptive(f, mid, hi, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate_gk(const std::function<double(double)>& f, double lo, double hi, double tol,
                    int max_depth) {
  if (lo == hi) return 0.0;
  return gk_adaptive(f, lo, hi, tol, max_depth);
}

}  // namespace levyjoint
