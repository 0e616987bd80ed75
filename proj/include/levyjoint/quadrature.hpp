#pragma once
// Quadrature building blocks:
//  - error model of the infinite trapezoid rule for functions analytic in a
//    horizontal strip (discretization) and envelope-based truncation,
//  - summation by parts for slowly decaying oscillatory sums,
//  - adaptive Gauss-Kronrod integration used by the closed-form oracles.

#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

namespace levyjoint {

using cd = std::complex<double>;

// Discretization error of the infinite trapezoid rule with step `zeta` for a
// function analytic and integrable in the strip |Im y| < d with Hardy norm H:
//   err <= H * e^{-2 pi d / zeta} / (1 - e^{-2 pi d / zeta}).
double trapezoid_discretization_error(double hardy_norm, double d, double zeta);

// Step achieving `eps` in the bound above.
double trapezoid_step_for_error(double hardy_norm, double d, double eps);

// Direct evaluation of  zeta * sum_j e^{-i a (j0+j) zeta} g[j].
cd oscillatory_sum_direct(const std::vector<cd>& g, double a, double zeta, long j0);

// Same sum evaluated after n rounds of summation by parts:
//   zeta * sum_j e^{-i a j zeta} g_j
//     = zeta/(e^{i a zeta}-1)^n * sum_j e^{-i a j zeta} (Delta^n g)_j,
// which converges much faster when g decays slowly and |a| is large. The
// forward differences shorten the array by n. Requires |e^{i a zeta} - 1|
// above `resonance_eps`; returns false (out untouched) below it, and the
// caller falls back to the direct sum.
bool oscillatory_sum_by_parts(const std::vector<cd>& g, double a, double zeta, long j0, int n,
                              cd* out, double resonance_eps = 1e-8);

// Adaptive Gauss-Kronrod (G7,K15) integration of f over [lo, hi] to absolute
// tolerance `tol`. Used for the level integral of the triple-cdf engine (the
// supremum-cut direction) and by the Brownian-motion oracle.
double integrate_gk(const std::function<double(double)>& f, double lo, double hi, double tol,
                    int max_depth = 28);

}  // namespace levyjoint
