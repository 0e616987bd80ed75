#pragma once
// Sinh-deformed integration contours and the parameter selector that selects
// step sizes and truncation lengths from a target accuracy 10^{-ne}.
//
// Fourier contours:  chi(y)  = i*omega1 + b*sinh(i*omega + y)
//   omega > 0: wings point up (suitable as an upper contour L+),
//   omega < 0: wings point down (lower contour L-).
// Bromwich contours: chiL(y) = sigma + i*b*sinh(i*omega + y)
//   wings open into the left half-plane; Re chiL -> -infinity on both sides.
//
// A trapezoid sum on a uniform y-grid of step zeta converges like
// exp(-2 pi d / zeta) where d is the half-width of the strip around the real
// y-axis in which the mapped integrand stays analytic and integrable; the
// selector balances this against truncation of the double-exponentially
// growing wings.

#include <string>
#include <vector>

#include "levyjoint/models.hpp"

namespace levyjoint {

enum class ContourKind { fourier, bromwich };

struct SinhContour {
  ContourKind kind = ContourKind::fourier;
  double omega1 = 0.0;  // fourier: imaginary offset of the base; bromwich: real offset
  double b = 1.0;       // scale
  double omega = 0.0;   // tilt angle of the wings
  double zeta = 0.1;    // quadrature step in y
  long j_lo = 0;        // node indices j_lo..j_hi, node j at y = j*zeta
  long j_hi = 0;
  double d = 0.0;       // analyticity half-strip used for error control

  cd point(double y) const;
  cd deriv(double y) const;  // d chi / d y (for bromwich this includes the factor i)
  std::size_t count() const { return static_cast<std::size_t>(j_hi - j_lo) + 1; }
};

// A contour with nodes and derivatives evaluated once.
struct QuadGrid {
  SinhContour c;
  std::vector<cd> node;   // chi(j*zeta), j = j_lo..j_hi
  std::vector<cd> deriv;  // chi'(j*zeta)
  long j_lo = 0;
  double zeta = 0.0;
  std::size_t size() const { return node.size(); }
};

QuadGrid materialize(const SinhContour& c);

struct SchemeTuning {
  double k_omega = 1.0;      // scales the Fourier tilt angles (deformation pairs)
  double k_omega_ell = 1.0;  // scales the Bromwich tilt angle
  double q0_factor = 1.0;    // scales the Bromwich base point q(0) = q0_factor / T
  double omega_ell = 0.0;    // Bromwich tilt; 0 selects the default pi/10
};

struct SchemeParams {
  double ne = 0.0;       // target accuracy 10^{-ne} for the main grids
  double ne_whf = 0.0;   // target accuracy for the factor grids
  double omega_ell = 0.0;
  SinhContour Lq;        // Bromwich for the horizon T; one-sided indices [0, N]
  SinhContour Lqp;       // Bromwich for the interior time t; two-sided [-N', N']
  SinhContour Lp, Lm;    // coarse Fourier contours (upper / lower), [-N, N]
  SinhContour Lp1, Lm1;  // fine Fourier contours for the factor integrals
};

// Builds all six grids for a model and a pair of time horizons. ne is the
// decimal accuracy target; ne_whf (typically ne + 2) governs the fine grids.
SchemeParams select_scheme(const LevyModel& model, double T, double t, double ne,
                           double ne_whf, const SchemeTuning& tuning = {});

struct AdmissibilityReport {
  bool ok = false;
  double min_cut_margin = 0.0;  // min |Im(1 + psi/q)| over pairs with Re <= 0
  std::string detail;
};

// Verifies, over every (q, xi) node pair actually used, that 1 + psi(xi)/q
// stays away from the branch cut (-infinity, 0], and that the contour angles
// are jointly admissible.
AdmissibilityReport check_admissibility(const LevyModel& model, const SchemeParams& sp);

std::string scheme_summary(const SchemeParams& sp);

}  // namespace levyjoint
