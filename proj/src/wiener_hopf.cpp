#include "levyjoint/wiener_hopf.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "levyjoint/simd.hpp"

namespace levyjoint {

namespace {
constexpr double kPi = std::numbers::pi;
const cd kInv2PiI{0.0, -1.0 / (2.0 * kPi)};  // 1 / (2 pi i)

// R_m = chi'(y_m) ln B(eta_m) / eta_m on a fine grid; also returns sum R_m.
struct RVec {
  std::vector<cd> r;
  cd sum{0.0, 0.0};
};

RVec build_r(const QuadGrid& g, const std::vector<cd>& exv, cd q, double mu, bool fv) {
  RVec out;
  out.r.resize(g.size());
  for (std::size_t m = 0; m < g.size(); ++m) {
    const cd eta = g.node[m];
    const cd b = fv ? 1.0 + exv[m] / (q - cd(0.0, mu) * eta) : 1.0 + exv[m] / q;
    const cd v = g.deriv[m] * std::log(b) / eta;
    out.r[m] = v;
    out.sum += v;
  }
  return out;
}

// The drift prefactor q/(q - i mu xi) has its pole at xi = -i q / mu: in the
// lower half-plane for mu > 0, upper for mu < 0. It therefore belongs to
// phi^+ when mu > 0 and to phi^- when mu < 0 (and appears exactly once in the
// product). This also makes phi^+ vanish at +i infinity for mu > 0 (no
// supremum atom) while phi^- tends to the atom mass a^-_q.
cd prefactor_plus(cd q, double mu, bool fv, cd xi) {
  if (!fv || !(mu > 0.0)) return cd(1.0, 0.0);
  return q / (q - cd(0.0, mu) * xi);
}

cd prefactor_minus(cd q, double mu, bool fv, cd xi) {
  if (!fv || !(mu < 0.0)) return cd(1.0, 0.0);
  return q / (q - cd(0.0, mu) * xi);
}
}  // namespace

WhfContext make_whf_context(const LevyModel& model, const SchemeParams& sp) {
  WhfContext ctx;
  ctx.model = &model;
  ctx.mu = model.drift();
  ctx.fv = model.analyticity().nu < 1.0;
  ctx.gLp = materialize(sp.Lp);
  ctx.gLm = materialize(sp.Lm);
  ctx.gLp1 = materialize(sp.Lp1);
  ctx.gLm1 = materialize(sp.Lm1);

  auto eval = [&](const QuadGrid& g, bool use_psi0) {
    std::vector<cd> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      v[i] = use_psi0 ? model.psi0(g.node[i]) : model.psi(g.node[i]);
    return v;
  };
  ctx.psi_Lp = eval(ctx.gLp, false);
  ctx.psi_Lm = eval(ctx.gLm, false);
  ctx.exv_Lp1 = eval(ctx.gLp1, ctx.fv);
  ctx.exv_Lm1 = eval(ctx.gLm1, ctx.fv);
  return ctx;
}

FactorTables compute_factor_tables(const WhfContext& ctx, cd q, FactorSides sides) {
  FactorTables t;
  t.q = q;
  const bool want_lp = sides != FactorSides::lm_only;
  const bool want_lm = sides != FactorSides::lp_only;

  if (ctx.fv && ctx.mu > 0.0) {
    const RVec rp0 = build_r(ctx.gLp1, ctx.exv_Lp1, q, ctx.mu, ctx.fv);
    t.a_minus = std::exp(-kInv2PiI * ctx.gLp1.zeta * rp0.sum);
  }
  if (ctx.fv && ctx.mu < 0.0) {
    const RVec rm0 = build_r(ctx.gLm1, ctx.exv_Lm1, q, ctx.mu, ctx.fv);
    t.a_plus = std::exp(kInv2PiI * ctx.gLm1.zeta * rm0.sum);
  }

  const cd wm = kInv2PiI * ctx.gLm1.zeta;  // phi^+: integral along L-1, + sign
  const cd wp = -kInv2PiI * ctx.gLp1.zeta; // phi^-: integral along L+1, - sign

  if (want_lp) {
    const RVec rm = build_r(ctx.gLm1, ctx.exv_Lm1, q, ctx.mu, ctx.fv);
    const std::size_t np = ctx.gLp.size();
    t.phi_p_on_Lp.resize(np);
    t.phi_m_on_Lp.resize(np);
    for (std::size_t k = 0; k < np; ++k) {
      const cd xi = ctx.gLp.node[k];
      const cd e = wm * xi * simd::cauchy_sum(rm.r.data(), ctx.gLm1.node.data(),
                                              rm.r.size(), xi);
      const cd fp = prefactor_plus(q, ctx.mu, ctx.fv, xi) * std::exp(e);
      t.phi_p_on_Lp[k] = fp;
      t.phi_m_on_Lp[k] = 1.0 / ((1.0 + ctx.psi_Lp[k] / q) * fp);
    }
  }

  if (want_lm) {
    const RVec rp = build_r(ctx.gLp1, ctx.exv_Lp1, q, ctx.mu, ctx.fv);
    const std::size_t nm = ctx.gLm.size();
    t.phi_m_on_Lm.resize(nm);
    t.phi_p_on_Lm.resize(nm);
    for (std::size_t j = 0; j < nm; ++j) {
      const cd xi = ctx.gLm.node[j];
      const cd e = wp * xi * simd::cauchy_sum(rp.r.data(), ctx.gLp1.node.data(),
                                              rp.r.size(), xi);
      const cd fm = prefactor_minus(q, ctx.mu, ctx.fv, xi) * std::exp(e);
      t.phi_m_on_Lm[j] = fm;
      t.phi_p_on_Lm[j] = 1.0 / ((1.0 + ctx.psi_Lm[j] / q) * fm);
    }
  }
  return t;
}

cd phi_plus_at(const WhfContext& ctx, cd q, cd xi) {
  const RVec rm = build_r(ctx.gLm1, ctx.exv_Lm1, q, ctx.mu, ctx.fv);
  const cd e = kInv2PiI * ctx.gLm1.zeta * xi *
               simd::cauchy_sum(rm.r.data(), ctx.gLm1.node.data(), rm.r.size(), xi);
  return prefactor_plus(q, ctx.mu, ctx.fv, xi) * std::exp(e);
}

cd phi_minus_at(const WhfContext& ctx, cd q, cd xi) {
  const RVec rp = build_r(ctx.gLp1, ctx.exv_Lp1, q, ctx.mu, ctx.fv);
  const cd e = -kInv2PiI * ctx.gLp1.zeta * xi *
               simd::cauchy_sum(rp.r.data(), ctx.gLp1.node.data(), rp.r.size(), xi);
  return prefactor_minus(q, ctx.mu, ctx.fv, xi) * std::exp(e);
}

cd atom_plus(const WhfContext& ctx, cd q) {
  if (!(ctx.fv && ctx.mu < 0.0)) return cd(0.0, 0.0);
  const RVec rm = build_r(ctx.gLm1, ctx.exv_Lm1, q, ctx.mu, ctx.fv);
  return std::exp(kInv2PiI * ctx.gLm1.zeta * rm.sum);
}

cd atom_minus(const WhfContext& ctx, cd q) {
  if (!(ctx.fv && ctx.mu > 0.0)) return cd(0.0, 0.0);
  const RVec rp = build_r(ctx.gLp1, ctx.exv_Lp1, q, ctx.mu, ctx.fv);
  return std::exp(-kInv2PiI * ctx.gLp1.zeta * rp.sum);
}

double factorization_identity_error(const WhfContext& ctx, cd q,
                                    const std::vector<double>& xis) {
  const RVec rp = build_r(ctx.gLp1, ctx.exv_Lp1, q, ctx.mu, ctx.fv);
  const RVec rm = build_r(ctx.gLm1, ctx.exv_Lm1, q, ctx.mu, ctx.fv);
  double worst = 0.0;
  for (double x : xis) {
    const cd xi{x, 0.0};
    const cd ep = kInv2PiI * ctx.gLm1.zeta * xi *
                  simd::cauchy_sum(rm.r.data(), ctx.gLm1.node.data(), rm.r.size(), xi);
    const cd em = -kInv2PiI * ctx.gLp1.zeta * xi *
                  simd::cauchy_sum(rp.r.data(), ctx.gLp1.node.data(), rp.r.size(), xi);
    const cd prod = prefactor_plus(q, ctx.mu, ctx.fv, xi) * std::exp(ep) *
                    prefactor_minus(q, ctx.mu, ctx.fv, xi) * std::exp(em) *
                    (1.0 + ctx.model->psi(xi) / q);
    worst = std::max(worst, std::abs(prod - 1.0));
  }
  return worst;
}

cd bm_phi_plus(double sigma, double mu, cd q, cd xi) {
  const cd root = std::sqrt(mu * mu + 2.0 * q * sigma * sigma);
  const cd kp = (root - mu) / (sigma * sigma);
  return kp / (kp - cd(0.0, 1.0) * xi);
}

cd bm_phi_minus(double sigma, double mu, cd q, cd xi) {
  const cd root = std::sqrt(mu * mu + 2.0 * q * sigma * sigma);
  const cd km = (root + mu) / (sigma * sigma);
  return km / (km + cd(0.0, 1.0) * xi);
}

}  // namespace levyjoint
