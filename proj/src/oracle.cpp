#include "levyjoint/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "levyjoint/quadrature.hpp"

namespace levyjoint {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Phi(hi) - Phi(lo) without cancellation when both arguments sit in one tail.
double normal_cdf_diff(double lo, double hi) {
  if (lo > hi) return -normal_cdf_diff(hi, lo);
  static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  if (lo >= 0.0) return 0.5 * (std::erfc(lo * inv_sqrt2) - std::erfc(hi * inv_sqrt2));
  if (hi <= 0.0) return 0.5 * (std::erfc(-hi * inv_sqrt2) - std::erfc(-lo * inv_sqrt2));
  return normal_cdf(hi) - normal_cdf(lo);
}

// int_l^u m exp(-m^2/(2 c1) - (m-a1)^2/(2 c2)) dm in closed form. Completing
// the square with alpha = 1/(2c1) + 1/(2c2), mu0 = (a1/c2)/(2 alpha) gives a
// Gaussian bulk term plus an erf bracket; the prefactor collapses to
// exp(-a1^2 / (2 (c1+c2))), which never overflows.
double gauss_piece(double l, double u, double c1, double c2, double a1) {
  const double alpha = 0.5 / c1 + 0.5 / c2;
  const double mu0 = (a1 / c2) / (2.0 * alpha);
  const double pref = std::exp(-a1 * a1 / (2.0 * (c1 + c2)));
  const double sa = std::sqrt(alpha);
  const double dl = l - mu0, du = u - mu0;
  double bulk = (std::exp(-alpha * dl * dl) - std::exp(-alpha * du * du)) / (2.0 * alpha);
  double erfs = mu0 * std::sqrt(kPi) / sa *
                normal_cdf_diff(std::sqrt(2.0) * sa * dl, std::sqrt(2.0) * sa * du);
  return pref * (bulk + erfs);
}

// I(s) = int_0^{a2} m e^{-m^2/(2 c1)} e^{-((m-a1)^+)^2/(2 c2)} dm with
// c1 = sigma^2 s, c2 = sigma^2 (T-s): the m- and b-integrals of the triple
// density collapsed in closed form.
double inner_m_integral(double s, double a1, double a2, double T, double sigma2) {
  const double c1 = sigma2 * s;
  const double c2 = sigma2 * (T - s);
  if (a1 >= a2) return -c1 * std::expm1(-a2 * a2 / (2.0 * c1));
  if (a1 <= 0.0) return gauss_piece(0.0, a2, c1, c2, a1);
  return -c1 * std::expm1(-a1 * a1 / (2.0 * c1)) + gauss_piece(a1, a2, c1, c2, a1);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double bm_triple_density(double s, double m, double b, double T, double sigma,
                         bool* s_in_range) {
  const bool s_ok = s > 0.0 && s < T;
  if (s_in_range != nullptr) *s_in_range = s_ok;
  if (!s_ok || m < b || m < 0.0) return 0.0;
  const double s2 = sigma * sigma;
  const double c1 = s2 * s, c2 = s2 * (T - s);
  const double d = m - b;
  return m * d / (kPi * s2 * s2 * std::pow(s, 1.5) * std::pow(T - s, 1.5)) *
         std::exp(-m * m / (2.0 * c1) - d * d / (2.0 * c2));
}

double bm_triple_cpdf(double a1, double a2, double T, double t, double sigma, double tol,
                      double* err_out) {
  if (err_out != nullptr) *err_out = 0.0;
  if (!(T > 0.0) || !(sigma > 0.0)) throw std::invalid_argument("bm_triple_cpdf: need T, sigma > 0");
  if (a2 <= 0.0 || t <= 0.0) return 0.0;
  if (t > T) t = T;
  const double sigma2 = sigma * sigma;

  // V = int_0^t I(s) / (pi sigma^2 s^{3/2} (T-s)^{1/2}) ds. Split at T/2 and
  // substitute s = u^2 on the left piece, s = T - v^2 on the right piece;
  // both integrands extend smoothly to the endpoints (I(s) ~ sigma^2 s at 0).
  const double s_mid = std::min(t, 0.5 * T);
  auto left = [&](double u) {
    const double s = u * u;
    if (s <= 0.0) {
      // lim_{s->0} I(s)/s: the e^{-m^2/(2c1)} factor concentrates at m = 0.
      double lim = sigma2;
      if (a1 < 0.0) lim *= std::exp(-a1 * a1 / (2.0 * sigma2 * T));
      return 2.0 * lim / (kPi * sigma2 * std::sqrt(T));
    }
    return 2.0 * inner_m_integral(s, a1, a2, T, sigma2) /
           (kPi * sigma2 * s * std::sqrt(T - s));
  };
  double v = integrate_gk(left, 0.0, std::sqrt(s_mid), 0.5 * tol);
  if (t > s_mid) {
    auto right = [&](double w) {
      const double s = T - w * w;
      return 2.0 * inner_m_integral(s, a1, a2, T, sigma2) / (kPi * sigma2 * std::pow(s, 1.5));
    };
    v += integrate_gk(right, std::sqrt(T - t), std::sqrt(T - s_mid), 0.5 * tol);
  }
  if (err_out != nullptr) *err_out = tol;
  return std::min(1.0, std::max(0.0, v));
}

// ---------------------------------------------------------------------------
// Monte Carlo skeleton estimator.

namespace {

using cdv = std::vector<std::complex<double>>;

// In-place forward DFT, radix-2: a_j <- sum_k a_k e^{-2 pi i jk / N}.
void fft_inplace(cdv& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      cd w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Resync the twiddle periodically so rounding does not accumulate.
        if ((k & 1023u) == 0u && k != 0u)
          w = std::polar(1.0, ang * static_cast<double>(k));
        const cd u = a[i + k], v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= cd(std::cos(ang), std::sin(ang));
      }
    }
  }
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Monotone quantile table for one skeleton step: x(u) at `size` u-levels,
// geometrically refined toward u -> 0 and u -> 1 so jump tails keep narrow
// cells, linear interpolation between knots (mass-preserving within cells).
struct QuantileTable {
  std::vector<double> u, x;

  double sample(double v) const {
    if (v <= u.front()) return x.front();
    if (v >= u.back()) return x.back();
    const auto it = std::upper_bound(u.begin(), u.end(), v);
    const std::size_t i = static_cast<std::size_t>(it - u.begin());
    const double w = (v - u[i - 1]) / (u[i] - u[i - 1]);
    return x[i - 1] + w * (x[i] - x[i - 1]);
  }
};

// Step CDF at horizon dt by direct FFT of e^{-dt psi}: density on a uniform
// x-grid, cumulative trapezoid, then the quantile knots. Grid sizes are
// chosen from the decay of the characteristic function (xi range) and the
// tail mass on the x side (range doubling until the outer wings carry less
// than 1e-9 of the mass).
QuantileTable build_step_table(const LevyModel& model, double dt, int table_size) {
  // xi range: |e^{-dt psi}| below e^{-25} at both ends.
  double xi_max = 1.0;
  for (int k = 0; k < 120; ++k) {
    const double da = dt * model.psi(cd(xi_max, 0.0)).real();
    const double db = dt * model.psi(cd(-xi_max, 0.0)).real();
    if (da > 25.0 && db > 25.0) break;
    xi_max *= 2.0;
    if (xi_max > 1e18) throw std::runtime_error("mc sampler: characteristic function does not decay");
  }

  // Initial x half-range from the diffusive scale and the analyticity strip
  // (exponential tail rates of the jump part).
  const AnalyticityData an = model.analyticity();
  const double rate = std::min(an.mu_plus, -an.mu_minus);
  double R = std::max(25.0 * std::sqrt(std::max(model.second_moment() * dt, 1e-300)),
                      rate > 0.0 ? 4.0 / rate : 1.0);

  std::vector<double> xs, cum;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 12) throw std::runtime_error("mc sampler: step tail mass not representable");
    const double dxi = kPi / R;
    std::size_t n = next_pow2(static_cast<std::size_t>(std::ceil(2.0 * xi_max / dxi)));
    n = std::max<std::size_t>(n, 4096);
    if (n > (std::size_t{1} << 23))
      throw std::runtime_error("mc sampler: FFT grid too large (xi range vs x range)");
    const double xim = 0.5 * static_cast<double>(n) * dxi;  // grown to fit the grid
    const double dx = 2.0 * R / static_cast<double>(n);

    cdv a(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double xi = -xim + static_cast<double>(k) * dxi;
      cd val = std::exp(-dt * model.psi(cd(xi, 0.0)));
      if (k & 1u) val = -val;
      a[k] = val;
    }
    fft_inplace(a);

    xs.assign(n, 0.0);
    std::vector<double> f(n);
    const double scale = dxi / (2.0 * kPi);
    for (std::size_t j = 0; j < n; ++j) {
      xs[j] = -R + static_cast<double>(j) * dx;
      double fj = scale * a[j].real();
      if (j & 1u) fj = -fj;
      f[j] = std::max(fj, 0.0);
    }
    cum.assign(n, 0.0);
    for (std::size_t j = 1; j < n; ++j) cum[j] = cum[j - 1] + 0.5 * dx * (f[j - 1] + f[j]);
    const double total = cum.back();
    if (!(total > 0.5))
      throw std::runtime_error("mc sampler: FFT density mass degenerate");

    // Outer 5% wings must be negligible, otherwise widen the x window.
    const std::size_t wing = n / 20;
    const double lo_mass = cum[wing];
    const double hi_mass = total - cum[n - 1 - wing];
    if (lo_mass / total < 1e-9 && hi_mass / total < 1e-9) {
      for (double& c : cum) c /= total;
      break;
    }
    R *= 2.0;
  }

  // u-levels: size/8 geometric knots per tail down to 1e-9, uniform middle.
  const int nt = std::max(table_size / 8, 8);
  const int nm = table_size - 2 * nt;
  const double u_min = 1e-9, del = 0.02;
  std::vector<double> levels;
  levels.reserve(static_cast<std::size_t>(table_size));
  for (int i = 0; i < nt; ++i)
    levels.push_back(u_min * std::pow(del / u_min, static_cast<double>(i) / nt));
  for (int i = 0; i < nm; ++i)
    levels.push_back(del + (1.0 - 2.0 * del) * static_cast<double>(i) / (nm - 1));
  for (int i = nt - 1; i >= 0; --i)
    levels.push_back(1.0 - u_min * std::pow(del / u_min, static_cast<double>(i) / nt));

  QuantileTable table;
  table.u = levels;
  table.x.resize(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double u = levels[i];
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    std::size_t j = static_cast<std::size_t>(it - cum.begin());
    double x;
    if (j == 0) {
      x = xs.front();
    } else if (j >= cum.size()) {
      x = xs.back();
    } else {
      const double c0 = cum[j - 1], c1 = cum[j];
      const double w = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
      x = xs[j - 1] + w * (xs[j] - xs[j - 1]);
    }
    table.x[i] = i > 0 ? std::max(x, table.x[i - 1]) : x;
  }
  return table;
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

McResult mc_triple_cpdf(const LevyModel& model, double a1, double a2, double T, double t,
                        const McConfig& cfg) {
  if (cfg.n_steps < 10 || cfg.n_paths < 1000)
    throw std::invalid_argument("mc_triple_cpdf: need n_steps >= 10, n_paths >= 1000");
  if (!(T > 0.0)) throw std::invalid_argument("mc_triple_cpdf: need T > 0");
  const std::int64_t n = cfg.n_steps;
  const double dt = T / static_cast<double>(n);
  // argmax index threshold: argmax time k*dt <= t  <=>  k <= t/dt (+ FP slack).
  const std::int64_t k_max = static_cast<std::int64_t>(std::floor(t / dt * (1.0 + 1e-12) + 1e-9));

  const bool gaussian = cfg.sampler == McConfig::Sampler::gaussian;
  QuantileTable table;
  if (!gaussian) table = build_step_table(model, dt, std::max(cfg.table_size, 64));
  const double mu_dt = model.drift() * dt;
  const double sigma_dt = std::sqrt(std::max(model.second_moment() * dt, 0.0));

  int n_threads = cfg.threads > 0 ? cfg.threads
                                  : static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;
  n_threads = static_cast<int>(std::min<std::int64_t>(n_threads, cfg.n_paths));

  std::vector<std::int64_t> hits(static_cast<std::size_t>(n_threads), 0);
  auto worker = [&](int tid) {
    std::int64_t local = 0;
    for (std::int64_t p = tid; p < cfg.n_paths; p += n_threads) {
      std::mt19937_64 rng(splitmix64(cfg.seed ^ (0x51d6a4f35b9ce3ddULL *
                                                 static_cast<std::uint64_t>(p + 1))));
      std::normal_distribution<double> nd(0.0, 1.0);
      std::uniform_real_distribution<double> ud(0.0, 1.0);
      double x = 0.0, run_max = 0.0;
      std::int64_t arg = 0;
      for (std::int64_t k = 1; k <= n; ++k) {
        x += gaussian ? mu_dt + sigma_dt * nd(rng) : table.sample(ud(rng));
        if (x > run_max) {  // strict: ties keep the earliest index
          run_max = x;
          arg = k;
        }
      }
      if (x <= a1 && run_max <= a2 && arg <= k_max) ++local;
    }
    hits[static_cast<std::size_t>(tid)] = local;
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int tid = 0; tid < n_threads; ++tid) pool.emplace_back(worker, tid);
  for (auto& th : pool) th.join();

  std::int64_t total = 0;
  for (std::int64_t h : hits) total += h;
  const double p_hat = static_cast<double>(total) / static_cast<double>(cfg.n_paths);
  McResult out;
  out.estimate = p_hat;
  out.std_error = std::sqrt(std::max(p_hat * (1.0 - p_hat), 0.0) /
                            static_cast<double>(cfg.n_paths));
  return out;
}

}  // namespace levyjoint
