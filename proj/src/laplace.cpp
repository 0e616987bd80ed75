#include "levyjoint/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace levyjoint {

namespace {
constexpr double kLn2 = std::numbers::ln2;

double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / i;
  return r;
}
}  // namespace

std::vector<double> gs_weights(int m) {
  if (m < 1 || m > 9)
    throw std::invalid_argument("gs_weights: m must be in [1,9] in double precision");
  std::vector<double> z(static_cast<std::size_t>(2 * m), 0.0);
  double mfact = 1.0;
  for (int i = 2; i <= m; ++i) mfact *= i;
  for (int k = 1; k <= 2 * m; ++k) {
    double s = 0.0;
    for (int j = (k + 1) / 2; j <= std::min(k, m); ++j) {
      s += std::pow(static_cast<double>(j), m + 1) / mfact * binom(m, j) *
           binom(2 * j, j) * binom(j, k - j);
    }
    z[static_cast<std::size_t>(k - 1)] = ((m + k) % 2 == 0 ? 1.0 : -1.0) * s;
  }
  return z;
}

double gs_invert(const std::function<double(double)>& fq, double T, int m) {
  const std::vector<double> z = gs_weights(m);
  const double l2t = kLn2 / T;
  double s = 0.0;
  for (int k = 1; k <= 2 * m; ++k)
    s += z[static_cast<std::size_t>(k - 1)] * fq(k * l2t);
  return l2t * s;
}

std::vector<double> gaver_functionals(const std::vector<double>& ftilde, double T) {
  const int n2 = static_cast<int>(ftilde.size());
  if (n2 < 2 || n2 % 2 != 0)
    throw std::invalid_argument("gaver_functionals: need an even number of samples");
  const int n = n2 / 2;
  const double l2t = kLn2 / T;
  std::vector<double> f(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) {
    double s = 0.0;
    for (int l = 0; l <= j; ++l) {
      const double term = binom(j, l) * ftilde[static_cast<std::size_t>(j + l - 1)];
      s += (l % 2 == 0) ? term : -term;
    }
    f[static_cast<std::size_t>(j - 1)] = j * l2t * binom(2 * j, j) * s;
  }
  return f;
}

WynnRhoResult wynn_rho(const std::vector<double>& seq) {
  const int n = static_cast<int>(seq.size());
  WynnRhoResult res;
  if (n == 0) return res;
  res.value = seq.back();
  res.used_terms = 0;
  if (n == 1) return res;

  // A run of exactly equal trailing values means the functionals have
  // saturated in double precision (constant transforms do this); the shared
  // value is the limit and the zero denominators it would cause are not a
  // failure of the table.
  {
    int run = 1;
    while (run < n && seq[static_cast<std::size_t>(n - 1 - run)] == seq.back()) ++run;
    if (run >= 3) {
      res.value = seq.back();
      res.used_terms = 0;
      return res;
    }
  }

  // With a flat tail the sequence has already converged; a tied pair of
  // functionals at the roundoff floor then just ends the table early and is
  // not a failure.
  double tspread = 0.0;
  for (int i = std::max(0, n - 4); i < n; ++i)
    tspread = std::max(tspread, std::abs(seq[static_cast<std::size_t>(i)] - seq.back()));
  const bool tail_flat = tspread <= 1e-9 * std::max(std::abs(seq.back()), 1e-300);

  // rho_{-1} = 0, rho_0 = seq; rho_k^{(j)} = rho_{k-2}^{(j+1)}
  //   + k / (rho_{k-1}^{(j+1)} - rho_{k-1}^{(j)}).
  // Even columns carry the extrapolated estimates; odd columns are auxiliary.
  std::vector<double> pp(seq.size() + 1, 0.0);  // level k-2 (starts at rho_{-1})
  std::vector<double> p = seq;                  // level k-1 (starts at rho_0)
  double scale = 0.0;
  for (double v : seq) scale = std::max(scale, std::abs(v));
  for (int k = 1; k <= n - 1; ++k) {
    std::vector<double> cur(static_cast<std::size_t>(n - k));
    for (int j = 0; j < n - k; ++j) {
      const double den = p[static_cast<std::size_t>(j + 1)] - p[static_cast<std::size_t>(j)];
      if (!(std::abs(den) > scale * 1e-300) || !std::isfinite(den)) {
        res.breakdown = !tail_flat;
        return res;
      }
      cur[static_cast<std::size_t>(j)] = pp[static_cast<std::size_t>(j + 1)] + k / den;
    }
    if (!std::isfinite(cur[0])) {
      res.breakdown = !tail_flat;
      return res;
    }
    if (k % 2 == 0) {
      res.value = cur[0];
      res.used_terms = k;
    }
    pp = std::move(p);
    p = std::move(cur);
  }
  return res;
}

GwrResult gwr_invert(const std::function<double(double)>& fq, double T,
                     const GwrOptions& opt) {
  if (opt.terms < 2) throw std::invalid_argument("gwr_invert: need terms >= 2");
  const double l2t = kLn2 / T;
  // Raise shifts so that every transform node stays safely right of sigma0.
  const double raise = std::max(0.0, 1.25 * opt.sigma0 - l2t);

  GwrResult res;
  bool first = true;
  double v0 = 0.0;
  for (double a : opt.shifts) {
    const double aeff = a + raise;
    std::vector<double> ft(static_cast<std::size_t>(2 * opt.terms));
    for (int k = 1; k <= 2 * opt.terms; ++k)
      ft[static_cast<std::size_t>(k - 1)] = fq(k * l2t + aeff);
    const WynnRhoResult w = wynn_rho(gaver_functionals(ft, T));
    const double v = std::exp(aeff * T) * w.value;
    res.rho_breakdown = res.rho_breakdown || w.breakdown;
    if (first) {
      v0 = v;
      res.value = v;
      res.shift_used = aeff;
      first = false;
    } else {
      res.error_estimate = std::max(res.error_estimate, std::abs(v - v0));
    }
  }
  return res;
}

double sinh_bromwich_invert(const std::function<cd(cd)>& fq, double T,
                            const SinhContour& contour) {
  if (contour.kind != ContourKind::bromwich)
    throw std::invalid_argument("sinh_bromwich_invert: needs a bromwich contour");
  const bool folded = contour.j_lo == 0;
  double s = 0.0;
  for (long j = contour.j_lo; j <= contour.j_hi; ++j) {
    const double y = contour.zeta * static_cast<double>(j);
    const cd q = contour.point(y);
    // (1/2 pi i) chi'(y) = deriv / (2 pi i); multiply by zeta for the step.
    const cd w = contour.deriv(y) / cd(0.0, 2.0 * std::numbers::pi);
    const double term = (w * std::exp(q * T) * fq(q)).real();
    s += (folded && j > 0) ? 2.0 * term : term;
  }
  return contour.zeta * s;
}

}  // namespace levyjoint
