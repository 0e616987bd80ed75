// NEON (aarch64) kernels. One std::complex<double> per 128-bit register.

#include "levyjoint/simd.hpp"

#if defined(__aarch64__) || defined(__ARM_NEON)
#include <arm_neon.h>

namespace levyjoint::simd {
namespace {

// [ar,ai] * [br,bi] -> [ar*br - ai*bi, ai*br + ar*bi]
inline float64x2_t cmul(float64x2_t a, float64x2_t b) {
  const double sgn_arr[2] = {-1.0, 1.0};
  const float64x2_t sgn = vld1q_f64(sgn_arr);
  float64x2_t t = vmulq_f64(vextq_f64(a, a, 1), vdupq_laneq_f64(b, 1));  // [ai*bi, ar*bi]
  t = vmulq_f64(t, sgn);
  return vfmaq_f64(t, a, vdupq_laneq_f64(b, 0));
}

inline cd to_cd(float64x2_t v) { return cd(vgetq_lane_f64(v, 0), vgetq_lane_f64(v, 1)); }

cd dot_neon(const cd* a, const cd* b, std::size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);
  float64x2_t acc0 = vdupq_n_f64(0.0), acc1 = vdupq_n_f64(0.0);
  std::size_t m = 0;
  for (; m + 2 <= n; m += 2) {
    acc0 = vaddq_f64(acc0, cmul(vld1q_f64(pa + 2 * m), vld1q_f64(pb + 2 * m)));
    acc1 = vaddq_f64(acc1, cmul(vld1q_f64(pa + 2 * m + 2), vld1q_f64(pb + 2 * m + 2)));
  }
  cd s = to_cd(vaddq_f64(acc0, acc1));
  if (m < n) s += a[m] * b[m];
  return s;
}

cd dot3_neon(const cd* a, const cd* b, const cd* c, std::size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);
  const double* pc = reinterpret_cast<const double*>(c);
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t m = 0;
  for (; m < n; ++m) {
    const float64x2_t p = cmul(vld1q_f64(pa + 2 * m), vld1q_f64(pb + 2 * m));
    acc = vaddq_f64(acc, cmul(p, vld1q_f64(pc + 2 * m)));
  }
  return to_cd(acc);
}

cd cauchy_neon(const cd* w, const cd* x, std::size_t n, cd z) {
  const double* pw = reinterpret_cast<const double*>(w);
  const double* px = reinterpret_cast<const double*>(x);
  const double zarr[2] = {z.real(), z.imag()};
  const float64x2_t zz = vld1q_f64(zarr);
  const double conj_arr[2] = {1.0, -1.0};
  const float64x2_t conj_sgn = vld1q_f64(conj_arr);
  float64x2_t acc = vdupq_n_f64(0.0);
  for (std::size_t m = 0; m < n; ++m) {
    const float64x2_t d = vsubq_f64(zz, vld1q_f64(px + 2 * m));
    const double nrm = vaddvq_f64(vmulq_f64(d, d));
    const float64x2_t num = cmul(vld1q_f64(pw + 2 * m), vmulq_f64(d, conj_sgn));
    acc = vaddq_f64(acc, vdivq_f64(num, vdupq_n_f64(nrm)));
  }
  return to_cd(acc);
}

void axpy_neon(cd alpha, const cd* x, cd* y, std::size_t n) {
  const double* px = reinterpret_cast<const double*>(x);
  double* py = reinterpret_cast<double*>(y);
  const double aarr[2] = {alpha.real(), alpha.imag()};
  const float64x2_t av = vld1q_f64(aarr);
  for (std::size_t m = 0; m < n; ++m) {
    const float64x2_t p = cmul(av, vld1q_f64(px + 2 * m));
    vst1q_f64(py + 2 * m, vaddq_f64(vld1q_f64(py + 2 * m), p));
  }
}

const Kernels table = {dot_neon, dot3_neon, cauchy_neon, axpy_neon};

}  // namespace

const Kernels* kernels_neon() { return &table; }

}  // namespace levyjoint::simd

#else

namespace levyjoint::simd {
const Kernels* kernels_neon() { return nullptr; }
}  // namespace levyjoint::simd

#endif
