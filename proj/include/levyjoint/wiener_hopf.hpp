#pragma once
// Wiener-Hopf factors phi^+_q, phi^-_q of a Levy process:
//
//   q / (q + psi(xi)) = phi^+_q(xi) * phi^-_q(xi),
//
// phi^+ analytic and zero-free above the lower factor contour, phi^- below
// the upper one, both -> 1 (infinite variation) or -> q/(q - i mu xi) * const
// (finite variation) at infinity. Factors are computed by exponentiating a
// Cauchy-type integral of ln(1 + psi/q) along sinh-deformed contours:
//
//   phi^+_q(xi) = pref(xi) exp[ (1/2 pi i) Int_{L-} xi ln B(eta) /
//                                             (eta (xi - eta)) d eta ],
//   phi^-_q(xi) = pref(xi) exp[ -(1/2 pi i) Int_{L+} ... ],
//
// where for infinite variation B = 1 + psi(eta)/q and pref = 1, while for
// finite variation B = 1 + psi0(eta)/(q - i mu eta) and pref = q/(q - i mu xi)
// (which keeps B -> 1 at infinity and hence the integral absolutely
// convergent).
//
// Values on the opposite side of the strip come from the factorization
// identity instead of a second integral:
//   phi^+_{q}(xi in L-) = 1 / ( (1 + psi(xi)/q) phi^-_q(xi) ),  and mirrored.
//
// For finite variation with drift, the supremum / infimum laws carry an atom
// at zero whose mass is
//   a^-_q = exp[ -(1/2 pi i) Int_{L+} ln B(eta) / eta d eta ]   (mu > 0),
//   a^+_q = exp[ +(1/2 pi i) Int_{L-} ln B(eta) / eta d eta ]   (mu < 0),
// and phi^{++} = phi^+ - a^+, phi^{--} = phi^- - a^- decay at infinity.

#include <vector>

#include "levyjoint/contours.hpp"
#include "levyjoint/models.hpp"

namespace levyjoint {

// Grids and exponent samples shared by all q.
struct WhfContext {
  const LevyModel* model = nullptr;
  double mu = 0.0;
  bool fv = false;  // finite variation (nu < 1): drift prefactor + possible atoms
  QuadGrid gLp, gLm;    // coarse contours the factors are tabulated on
  QuadGrid gLp1, gLm1;  // fine contours the factor integrals run along
  std::vector<cd> psi_Lp, psi_Lm;    // psi at coarse nodes
  std::vector<cd> exv_Lp1, exv_Lm1;  // fv: psi0 at fine nodes; else psi
};

WhfContext make_whf_context(const LevyModel& model, const SchemeParams& sp);

// Factor values for one q on both coarse grids, plus atoms.
struct FactorTables {
  cd q{};
  cd a_plus{0.0, 0.0};
  cd a_minus{0.0, 0.0};
  std::vector<cd> phi_m_on_Lm;  // phi^-_q at L- nodes (its own side)
  std::vector<cd> phi_p_on_Lm;  // phi^+_q continued to L- via the identity
  std::vector<cd> phi_p_on_Lp;  // phi^+_q at L+ nodes (its own side)
  std::vector<cd> phi_m_on_Lp;  // phi^-_q continued to L+ via the identity
};

// Which coarse grids the tables are needed on. The interior-time q' sum only
// consumes phi^{++} on L-, so it can skip the L+ side (half the work).
enum class FactorSides { both, lm_only, lp_only };

FactorTables compute_factor_tables(const WhfContext& ctx, cd q,
                                   FactorSides sides = FactorSides::both);

// Single-point evaluations (diagnostics, factor dumps, tests). xi must lie
// strictly above L-1 for phi_plus_at and strictly below L+1 for phi_minus_at.
cd phi_plus_at(const WhfContext& ctx, cd q, cd xi);
cd phi_minus_at(const WhfContext& ctx, cd q, cd xi);
cd atom_plus(const WhfContext& ctx, cd q);
cd atom_minus(const WhfContext& ctx, cd q);

// Max of |phi^+ phi^- (1 + psi/q) - 1| over xi on the real axis.
double factorization_identity_error(const WhfContext& ctx, cd q,
                                    const std::vector<double>& xis);

// Brownian motion closed forms: q + psi has the two imaginary roots
// i kappa_- and -i kappa_+, kappa_+- = (-+ mu + sqrt(mu^2 + 2 q sigma^2)) / sigma^2,
// phi^+ = kappa_+ / (kappa_+ - i xi), phi^- = kappa_- / (kappa_- + i xi).
cd bm_phi_plus(double sigma, double mu, cd q, cd xi);
cd bm_phi_minus(double sigma, double mu, cd q, cd xi);

}  // namespace levyjoint
