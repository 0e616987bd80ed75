#pragma once
// Numerical Laplace inversion:
//  - Gaver-Stehfest (real nodes, fixed weights),
//  - Gaver functionals accelerated by the Wynn rho algorithm ("GWR"),
//    with abscissa shifts both for convergence safety and error estimation,
//  - plain trapezoid inversion along a sinh-deformed Bromwich contour.
// All real-node methods share the roughly 1e-8 accuracy floor imposed by
// cancellation in double precision.

#include <functional>
#include <vector>

#include "levyjoint/contours.hpp"

namespace levyjoint {

// Gaver-Stehfest weights zeta_k, k = 1..2m:
//   f(T) ~ (ln 2 / T) sum_k zeta_k f~(k ln 2 / T).
std::vector<double> gs_weights(int m);

double gs_invert(const std::function<double(double)>& fq, double T, int m);

// Gaver functionals from samples f~(k ln2/T), k = 1..2N (input size 2N):
//   f_j = (j ln2/T) C(2j,j) sum_{l=0..j} (-1)^l C(j,l) f~((j+l) ln2/T).
std::vector<double> gaver_functionals(const std::vector<double>& ftilde, double T);

struct WynnRhoResult {
  double value = 0.0;
  bool breakdown = false;  // hit a vanishing denominator; value is the last
                           // stable even-column estimate
  int used_terms = 0;
};

// Wynn rho acceleration of a sequence seq[0..N-1] ~ f + c1/N + c2/N^2 + ...
WynnRhoResult wynn_rho(const std::vector<double>& seq);

struct GwrOptions {
  int terms = 8;  // number of Gaver functionals (needs 2*terms transform calls);
                  // more terms lose to cancellation in double precision
  std::vector<double> shifts = {0.0, 0.5, 1.0};
  double sigma0 = 0.0;  // keep all nodes above ~1.25 * sigma0 by raising shifts
};

struct GwrResult {
  double value = 0.0;
  double error_estimate = 0.0;  // spread across the shifted inversions
  bool rho_breakdown = false;
  double shift_used = 0.0;
};

GwrResult gwr_invert(const std::function<double(double)>& fq, double T,
                     const GwrOptions& opt = {});

// f(T) = (1/2 pi i) int e^{qT} f~(q) dq along a sinh Bromwich contour.
// For a one-sided grid (j_lo == 0) the symmetry f~(conj q) = conj f~(q) is
// assumed and the j>0 terms are folded with weight 2.
double sinh_bromwich_invert(const std::function<cd(cd)>& fq, double T,
                            const SinhContour& contour);

}  // namespace levyjoint
