#pragma once
// Joint law of a Levy process, its running supremum, and the time the
// supremum is reached:
//
//   V(a1, a2; T, t) = P[ X_T <= a1,  sup_{s<=T} X_s <= a2,  tau_T <= t ],
//
// where tau_T is the (first) time the supremum over [0,T] is attained.
//
// Splitting the path at time t and writing W' = sup_{s<=t} X_s and
// Y' = X_t - W' (post-supremum drawdown, <= 0), the event factorizes over
// the time-t state: with X2 an independent copy of the process run over the
// remaining window T - t,
//
//   V = E[ 1{W' <= a2} * J(a1 - W' - Y' + v, v)|_{v=-Y'} ],
//   J(a, h) = P[ X2(T-t) <= a, sup X2 <= h ],
//
// because the whole-path supremum is max(W', X_t + sup X2) and tau_T <= t
// exactly when the second argument stays below the first.  At an
// exponential interior time, W' and -Y' are independent (Wiener-Hopf), so
// every factor is a product of one-sided transforms.  Four methods:
//
//   sinh      - both Laplace inversions on sinh-deformed Bromwich contours
//               and all spatial pairings on sinh-deformed Fourier contours;
//               the level integral over the supremum window [a1, a2] is an
//               adaptive Gauss-Kronrod pass over the folded integrand.
//               Error estimated from a paired run with both tilt angles
//               scaled by 0.9.
//   sinh-gwr  - the interior-time inversion replaced by Gaver-Wynn-rho on
//               real abscissas; the horizon-side inversion stays on a
//               deformed contour. Error from the spread across GWR shifts.
//   disc-sinh - Riemann-Stieltjes pairing over the time-t law of
//               (W', -Y'): product cell masses on a grid with step dh in
//               the drawdown direction, paired against the exact window
//               kernel J; all transforms inverted on sinh contours.
//   disc-gwr  - same pairing with both time inversions done by GWR on real
//               abscissas. The only method valid for finite variation with
//               nonzero drift, where complex q would drag a pole of
//               1 + psi/q across the deformed contours.
//
// The engine is built once per (model, T, t, options); the heavy kernel
// tables are shared by every (a1, a2) on the query grid.

#include <memory>
#include <string>
#include <vector>

#include "levyjoint/contours.hpp"
#include "levyjoint/models.hpp"

namespace levyjoint {

enum class Method { sinh, sinh_gwr, disc_sinh, disc_gwr };

const char* method_name(Method m);
bool parse_method(const std::string& s, Method* out);

struct TripleQuery {
  double a1 = 0.0;
  double a2 = 0.0;  // must be > 0
};

struct EngineOptions {
  Method method = Method::sinh;
  double ne = 8.0;       // decimal accuracy target for the main grids
  double ne_whf = 0.0;   // fine factor grids; <= 0 resolves to ne + 2
  double dh = 3.125e-5;  // drawdown step of the disc methods
  int disc_nx = 0;       // supremum-direction cells of the disc methods; 0 = auto
  int threads = 1;
  int gwr_terms = 8;     // Gaver functionals (twice as many transform samples)
  std::vector<double> gwr_shifts = {0.0, 0.5, 1.0};
  bool error_pairs = true;      // run the 0.9-tilt partner (method sinh)
  int sum_by_parts_order = 2;   // reserved for uniform-phase grids; the sinh
                                // grids have nonuniform phase and bypass it
  SchemeTuning tuning{};
};

struct CpdfResult {
  double a1 = 0.0, a2 = 0.0, T = 0.0, t = 0.0;
  double value = 0.0;  // clamped to [0,1]
  double raw = 0.0;    // before clamping
  double error_estimate = 0.0;
  Method method = Method::sinh;
  double runtime_s = 0.0;
  SchemeParams scheme;
  std::vector<std::string> warnings;
};

struct V2Derivatives {
  double dv2_dh = 0.0;
  double d2v2_dadh = 0.0;
};

class TripleEngine {
 public:
  // The model reference must outlive the engine.
  TripleEngine(const LevyModel& model, double T, double t, EngineOptions opt = {});
  ~TripleEngine();
  TripleEngine(TripleEngine&&) noexcept;
  TripleEngine& operator=(TripleEngine&&) noexcept;

  const SchemeParams& scheme() const;
  const EngineOptions& options() const;
  double horizon() const;
  double interior_time() const;

  // Batch evaluation; kernel tables are built once and shared.
  std::vector<CpdfResult> evaluate(const std::vector<TripleQuery>& queries);
  CpdfResult evaluate(const TripleQuery& query);

  // Building blocks (primary deformation). All are probabilities/values at
  // the engine's (T, t) unless stated otherwise.
  double v_ftd(double h) const;                  // P[sup_{s<=t} X_s >= h]
  double v_ftd_at(double h, double s) const;     // same at interior time s
  double v_ftd_gwr(double h, double* err = nullptr) const;
  double marginal_cdf(double a) const;           // P[X_T <= a]
  double v2(double a1, double h) const;          // P[X_T<=a1, sup<=h] - P[X_T<=a1]
  double v2_gwr(double a1, double h, double* err = nullptr) const;
  double joint_cdf(double a1, double h) const;   // P[X_T <= a1, sup_{s<=T} X_s <= h]
  V2Derivatives v2_derivatives(double a1, double h) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace levyjoint
