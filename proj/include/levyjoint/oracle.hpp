#pragma once
// Independent ground-truth generators used by tests and spot checks:
//
//  - the closed-form joint law of (argmax time, maximum, terminal value) for
//    driftless Brownian motion, integrated to the triple CDF
//    V(a1,a2;T,t) = P[X_T <= a1, sup X <= a2, argmax <= t],
//  - a Monte Carlo skeleton estimator of the same probability for any model,
//    with Gaussian increments or inverse-CDF increments tabulated from a
//    direct FFT of the characteristic function. The MC path is deliberately
//    independent of the Wiener-Hopf machinery so a shared bug cannot cancel.

#include <cstdint>

#include "models.hpp"

namespace levyjoint {

// Standard normal CDF.
double normal_cdf(double x);

// Joint density of (s, m, b) = (argmax time, maximum, terminal value) of a
// driftless Brownian motion with volatility `sigma` on [0, T]:
//   p(s,m,b) = m (m-b) / (pi sigma^4 s^{3/2} (T-s)^{3/2})
//              * exp( -m^2/(2 sigma^2 s) - (m-b)^2/(2 sigma^2 (T-s)) ).
// Returns 0 outside the support {0 < s < T, m >= max(b, 0)}. If
// `s_in_range` is given it is set to false exactly when s is outside (0, T).
double bm_triple_density(double s, double m, double b, double T, double sigma,
                         bool* s_in_range = nullptr);

// V(a1,a2;T,t) for driftless Brownian motion: the density above integrated
// over {s <= t, m <= a2, b <= a1}. The m- and b-integrals are done in closed
// form (error functions); the remaining s-integral is evaluated by adaptive
// Gauss-Kronrod quadrature after substitutions that remove the s^{-1/2} and
// (T-s)^{-1/2} endpoint singularities, so t = T is handled by the same code
// path. Absolute tolerance `tol`; the achieved error estimate (quadrature
// tolerance, not a rigorous bound) is written to `err_out` if given.
double bm_triple_cpdf(double a1, double a2, double T, double t, double sigma,
                      double tol = 1e-9, double* err_out = nullptr);

struct McConfig {
  std::int64_t n_steps = 10000;   // skeleton steps over [0, T]
  std::int64_t n_paths = 100000;
  std::uint64_t seed = 1;         // per-path generator seeded from (seed, path index)
  enum class Sampler { gaussian, cdf_inversion } sampler = Sampler::gaussian;
  int table_size = 2048;          // inverse-CDF tabulation points
  int threads = 0;                // 0 = hardware concurrency; result is thread-count invariant
};

struct McResult {
  double estimate = 0.0;
  double std_error = 0.0;
};

// Monte Carlo estimate of V(a1,a2;T,t) over the n_steps-point skeleton:
// empirical frequency of {X_T <= a1, max_k X_{t_k} <= a2, argmax <= t} with
// the argmax tie broken to the earliest index. The skeleton maximum
// undershoots the true supremum, so the estimate is biased toward larger V;
// the bias shrinks as n_steps grows.
//
// Samplers:
//  - gaussian: increments mu*dt + sqrt(m2*dt)*Z. Exact for Brownian motion,
//    a moment-matched approximation otherwise.
//  - cdf_inversion: the step CDF at horizon T/n_steps is computed by an FFT
//    of e^{-dt psi(xi)} on an automatically sized grid, then tabulated as a
//    `table_size`-knot quantile table (geometrically refined toward both
//    tails) with monotone linear interpolation.
// Throws std::runtime_error with diagnostics if the sampler cannot be built
// (tail mass or characteristic-function decay not representable).
McResult mc_triple_cpdf(const LevyModel& model, double a1, double a2, double T, double t,
                        const McConfig& cfg);

}  // namespace levyjoint
