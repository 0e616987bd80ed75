#include "levyjoint/contours.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace levyjoint {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kLn10 = std::numbers::ln10;

// Selector constants, calibrated so that published-style accuracy targets map
// to step/truncation pairs with mild safety margins.
constexpr double kMargin = 0.95;     // stay inside hard angle bounds
constexpr double kOmegaFrac = 0.6;   // tilt as a fraction of the admissible angle
constexpr double kDFrac = 0.4;       // strip half-width fraction (Fourier)
constexpr double kPoleCap = 0.9;     // d <= kPoleCap * |omega| keeps the strip
                                     //  image clear of poles on the other side
constexpr double kPFourier = 0.7;    // effective power decay used for truncation
constexpr double kDlFrac = 0.9;      // Bromwich strip: d_l = kDlFrac * omega_l
                                     //  (d_l < omega_l keeps e^{qT} integrable)
constexpr double kYQ = 14.0;         // truncation reach in y for the T-grid
constexpr double kYQp = 15.5;        // truncation reach in y for the t-grid
constexpr double kSigmaPad = 1.02;   // base offset pad: sigma/b >= sin(omega_l+d_l)
constexpr double kStripFrac = 0.5;   // Fourier base depth: half the strip side
constexpr double kBranchFrac = 0.5;  // ...and at most half the branch-point scale
                                     //  of ln(1+psi/q): roots of q + psi(xi) = 0
                                     //  sit near +-i sqrt(2 q) / sqrt(psi''(0))

SinhContour make_fourier(double sign, double b, double omega, double d, double zeta,
                         long n) {
  SinhContour c;
  c.kind = ContourKind::fourier;
  c.omega1 = 0.0;
  c.b = b;
  c.omega = sign * omega;
  c.zeta = zeta;
  c.j_lo = -n;
  c.j_hi = n;
  c.d = d;
  return c;
}
}  // namespace

cd SinhContour::point(double y) const {
  const cd s = std::sinh(cd(0.0, omega) + y);
  if (kind == ContourKind::fourier) return cd(0.0, omega1) + b * s;
  return cd(omega1, 0.0) + cd(0.0, b) * s;
}

cd SinhContour::deriv(double y) const {
  const cd ch = std::cosh(cd(0.0, omega) + y);
  if (kind == ContourKind::fourier) return b * ch;
  return cd(0.0, b) * ch;
}

QuadGrid materialize(const SinhContour& c) {
  QuadGrid g;
  g.c = c;
  g.j_lo = c.j_lo;
  g.zeta = c.zeta;
  g.node.resize(c.count());
  g.deriv.resize(c.count());
  for (long j = c.j_lo; j <= c.j_hi; ++j) {
    const double y = c.zeta * static_cast<double>(j);
    g.node[static_cast<std::size_t>(j - c.j_lo)] = c.point(y);
    g.deriv[static_cast<std::size_t>(j - c.j_lo)] = c.deriv(y);
  }
  return g;
}

SchemeParams select_scheme(const LevyModel& model, double T, double t, double ne,
                           double ne_whf, const SchemeTuning& tuning) {
  if (!(T > 0.0) || !(t > 0.0))
    throw std::invalid_argument("select_scheme: T and t must be positive");
  if (!(ne > 0.0) || !(ne_whf > 0.0))
    throw std::invalid_argument("select_scheme: accuracy targets must be positive");

  const AnalyticityData an = model.analyticity();
  const double omega_ell =
      (tuning.omega_ell > 0.0 ? tuning.omega_ell : kPi / 10.0) * tuning.k_omega_ell;

  SchemeParams sp;
  sp.ne = ne;
  sp.ne_whf = ne_whf;
  sp.omega_ell = omega_ell;

  // ---- Bromwich grids -------------------------------------------------------
  // chiL(y) = sigma + i b sinh(i omega_l + y). The strip half-width is capped
  // by omega_l itself: below tilt zero the wings of Re q turn positive and
  // e^{qT} is no longer integrable. The pole of 1/q maps to distance
  // asin(sigma/b) - omega_l from the real y-axis, kept >= d_l by the pad.
  const double d_ell = kDlFrac * omega_ell;
  const double sratio = std::min(kSigmaPad * std::sin(omega_ell + d_ell), 0.995);
  const double denom = sratio - std::sin(omega_ell);
  if (!(denom > 0.0))
    throw std::invalid_argument("select_scheme: bromwich tilt leaves no base offset");

  const double zeta_ell = 2.0 * kPi * d_ell / (ne * kLn10);

  auto make_bromwich = [&](double horizon, double reach, bool one_sided) {
    SinhContour c;
    c.kind = ContourKind::bromwich;
    c.b = tuning.q0_factor / (horizon * denom);
    c.omega1 = sratio * c.b;  // sigma
    c.omega = omega_ell;
    c.zeta = zeta_ell;
    c.d = d_ell;
    const long n = static_cast<long>(std::ceil(reach / zeta_ell));
    c.j_lo = one_sided ? 0 : -n;
    c.j_hi = n;
    return c;
  };
  sp.Lq = make_bromwich(T, kYQ, true);
  sp.Lqp = make_bromwich(t, kYQp, false);

  // ---- Fourier grids --------------------------------------------------------
  // Joint angle budget: the q-contour family sweeps arguments up to
  // pi/2 + omega_l + d_l, and psi(xi) contributes up to max(1,nu) * angle(xi);
  // keeping max(1,nu)*(|omega|+d) below (pi/2 - omega_l) with margin keeps
  // 1 + psi/q off its branch cut. The inner cone of the model caps the angle
  // independently.
  const double nu_eff = std::max(1.0, an.nu);
  const double omega_max =
      kMargin * std::min((kPi / 2.0 - omega_ell) / nu_eff,
                         std::min(an.gammap_plus, -an.gammap_minus));
  const double omega = kOmegaFrac * omega_max * tuning.k_omega;
  const double d = std::min(kDFrac * omega_max, kPoleCap * omega);
  if (!(omega > 0.0) || !(d > 0.0))
    throw std::invalid_argument("select_scheme: degenerate Fourier tilt");

  // Base depth: half the analyticity strip, and clear of the zeros of
  // q + psi(xi) on the imaginary axis. The lowest such zero over the q-grids
  // sits near +-i kappa0 with kappa0 = sqrt(2 q(0) / psi''(0)) and q(0) = 1/T;
  // for models with a narrow strip (KoBoL) the strip bound wins, for
  // (near-)entire exponents (BM) the branch-point bound wins.
  const double kappa0 =
      std::sqrt(2.0 * tuning.q0_factor / (T * model.second_moment()));
  const double half_up = std::min(kStripFrac * an.mu_plus, kBranchFrac * kappa0);
  const double half_dn = std::min(kStripFrac * (-an.mu_minus), kBranchFrac * kappa0);
  const double s_od = std::sin(omega + d);
  const double b_up = half_up / s_od;
  const double b_dn = half_dn / s_od;

  auto fourier_pair = [&](double ne_target, SinhContour& up, SinhContour& dn) {
    const double zeta = 2.0 * kPi * d / (ne_target * kLn10);
    const long n =
        static_cast<long>(std::ceil(ne_target * kLn10 / (kPFourier * zeta)));
    up = make_fourier(+1.0, b_up, omega, d, zeta, n);
    dn = make_fourier(-1.0, b_dn, omega, d, zeta, n);
  };
  fourier_pair(ne, sp.Lp, sp.Lm);
  fourier_pair(ne_whf, sp.Lp1, sp.Lm1);

  return sp;
}

AdmissibilityReport check_admissibility(const LevyModel& model, const SchemeParams& sp) {
  AdmissibilityReport rep;
  rep.ok = true;
  rep.min_cut_margin = std::numeric_limits<double>::infinity();
  std::ostringstream why;

  const AnalyticityData an = model.analyticity();
  const double nu_eff = std::max(1.0, an.nu);

  // Joint angle condition on the undeformed contours.
  const double ang = nu_eff * std::abs(sp.Lp.omega);
  if (!(ang < kPi / 2.0 - sp.omega_ell)) {
    rep.ok = false;
    why << "angle condition violated: max(1,nu)*omega = " << ang
        << " >= pi/2 - omega_ell = " << (kPi / 2.0 - sp.omega_ell) << "; ";
  }

  // Bromwich pole distance: asin(sigma/b) - omega_l >= d_l.
  for (const SinhContour* c : {&sp.Lq, &sp.Lqp}) {
    const double ratio = c->omega1 / c->b;
    if (!(ratio > 0.0) || ratio > 1.0 ||
        std::asin(std::min(ratio, 1.0)) - c->omega < c->d * (1.0 - 1e-9)) {
      rep.ok = false;
      why << "bromwich pole margin too small (sigma/b = " << ratio << "); ";
    }
  }

  // Strip containment of the Fourier bases.
  if (sp.Lp.b * std::sin(sp.Lp.omega + sp.Lp.d) > an.mu_plus + 1e-12 ||
      sp.Lm.b * std::sin(-sp.Lm.omega + sp.Lm.d) > -an.mu_minus + 1e-12) {
    rep.ok = false;
    why << "Fourier contour family leaves the analyticity strip; ";
  }

  // Branch-cut check for ln(1 + psi(xi)/q) over every node pair in use.
  auto psi_on = [&](const SinhContour& c) {
    const QuadGrid g = materialize(c);
    std::vector<cd> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) v[i] = model.psi(g.node[i]);
    return v;
  };
  const std::vector<std::vector<cd>> psis = {psi_on(sp.Lp), psi_on(sp.Lm),
                                             psi_on(sp.Lp1), psi_on(sp.Lm1)};
  std::vector<cd> qs;
  for (const SinhContour* c : {&sp.Lq, &sp.Lqp}) {
    const QuadGrid g = materialize(*c);
    qs.insert(qs.end(), g.node.begin(), g.node.end());
  }

  std::size_t bad = 0;
  for (const auto& pv : psis) {
    for (const cd q : qs) {
      for (const cd p : pv) {
        const cd z = 1.0 + p / q;
        if (z.real() <= 0.0) {
          const double margin = std::abs(z.imag());
          rep.min_cut_margin = std::min(rep.min_cut_margin, margin);
          if (margin < 1e-6) ++bad;
        }
        if (std::abs(z) < 1e-9) ++bad;
      }
    }
  }
  if (bad > 0) {
    rep.ok = false;
    why << bad << " node pairs put 1 + psi/q on or near the branch cut; ";
  }

  rep.detail = why.str();
  if (rep.ok && rep.detail.empty()) rep.detail = "ok";
  return rep;
}

std::string scheme_summary(const SchemeParams& sp) {
  std::ostringstream os;
  os << "zeta_l=" << sp.Lq.zeta << " N_l=" << sp.Lq.j_hi << " zeta_l'=" << sp.Lqp.zeta
     << " N_l'=" << sp.Lqp.j_hi << " zeta=" << sp.Lp.zeta << " N=" << sp.Lp.j_hi
     << " zeta1=" << sp.Lp1.zeta << " N1=" << sp.Lp1.j_hi << " omega=" << sp.Lp.omega
     << " omega_l=" << sp.omega_ell << " b+=" << sp.Lp.b << " b-=" << sp.Lm.b
     << " b_l=" << sp.Lq.b << " sigma_l=" << sp.Lq.omega1;
  return os.str();
}

}  // namespace levyjoint
