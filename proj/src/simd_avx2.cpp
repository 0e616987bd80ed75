// AVX2+FMA kernels. Two std::complex<double> values per 256-bit register,
// interleaved [re, im] as guaranteed by the std::complex layout. This file is
// the only translation unit compiled with -mavx2 -mfma; callers reach it
// through the runtime dispatch table, so the rest of the binary stays
// baseline-portable.

#include "levyjoint/simd.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace levyjoint::simd {
namespace {

// [a0r,a0i,a1r,a1i] * [b0r,b0i,b1r,b1i] -> two complex products
inline __m256d cmul(__m256d a, __m256d b) {
  const __m256d bs = _mm256_permute_pd(b, 0x5);  // [b0i,b0r,b1i,b1r]
  const __m256d ar = _mm256_movedup_pd(a);       // [a0r,a0r,a1r,a1r]
  const __m256d ai = _mm256_permute_pd(a, 0xF);  // [a0i,a0i,a1i,a1i]
  return _mm256_fmaddsub_pd(ar, b, _mm256_mul_pd(ai, bs));
}

inline cd reduce2(__m256d acc) {
  const __m128d lo = _mm256_castpd256_pd128(acc);
  const __m128d hi = _mm256_extractf128_pd(acc, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  alignas(16) double out[2];
  _mm_store_pd(out, s);
  return cd(out[0], out[1]);
}

cd dot_avx2(const cd* a, const cd* b, std::size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t m = 0;
  for (; m + 4 <= n; m += 4) {
    acc0 = _mm256_add_pd(acc0, cmul(_mm256_loadu_pd(pa + 2 * m), _mm256_loadu_pd(pb + 2 * m)));
    acc1 = _mm256_add_pd(
        acc1, cmul(_mm256_loadu_pd(pa + 2 * m + 4), _mm256_loadu_pd(pb + 2 * m + 4)));
  }
  for (; m + 2 <= n; m += 2)
    acc0 = _mm256_add_pd(acc0, cmul(_mm256_loadu_pd(pa + 2 * m), _mm256_loadu_pd(pb + 2 * m)));
  cd s = reduce2(_mm256_add_pd(acc0, acc1));
  if (m < n) s += a[m] * b[m];
  return s;
}

cd dot3_avx2(const cd* a, const cd* b, const cd* c, std::size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);
  const double* pc = reinterpret_cast<const double*>(c);
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t m = 0;
  for (; m + 4 <= n; m += 4) {
    const __m256d p0 = cmul(_mm256_loadu_pd(pa + 2 * m), _mm256_loadu_pd(pb + 2 * m));
    const __m256d p1 = cmul(_mm256_loadu_pd(pa + 2 * m + 4), _mm256_loadu_pd(pb + 2 * m + 4));
    acc0 = _mm256_add_pd(acc0, cmul(p0, _mm256_loadu_pd(pc + 2 * m)));
    acc1 = _mm256_add_pd(acc1, cmul(p1, _mm256_loadu_pd(pc + 2 * m + 4)));
  }
  for (; m + 2 <= n; m += 2) {
    const __m256d p = cmul(_mm256_loadu_pd(pa + 2 * m), _mm256_loadu_pd(pb + 2 * m));
    acc0 = _mm256_add_pd(acc0, cmul(p, _mm256_loadu_pd(pc + 2 * m)));
  }
  cd s = reduce2(_mm256_add_pd(acc0, acc1));
  if (m < n) s += a[m] * b[m] * c[m];
  return s;
}

cd cauchy_avx2(const cd* w, const cd* x, std::size_t n, cd z) {
  const double* pw = reinterpret_cast<const double*>(w);
  const double* px = reinterpret_cast<const double*>(x);
  const __m256d zz = _mm256_setr_pd(z.real(), z.imag(), z.real(), z.imag());
  const __m256d conj_mask = _mm256_setr_pd(0.0, -0.0, 0.0, -0.0);
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t m = 0;
  for (; m + 4 <= n; m += 4) {
    {
      const __m256d d = _mm256_sub_pd(zz, _mm256_loadu_pd(px + 2 * m));
      const __m256d d2 = _mm256_mul_pd(d, d);
      const __m256d nrm = _mm256_hadd_pd(d2, d2);  // [n0,n0,n1,n1]
      const __m256d num = cmul(_mm256_loadu_pd(pw + 2 * m), _mm256_xor_pd(d, conj_mask));
      acc0 = _mm256_add_pd(acc0, _mm256_div_pd(num, nrm));
    }
    {
      const __m256d d = _mm256_sub_pd(zz, _mm256_loadu_pd(px + 2 * m + 4));
      const __m256d d2 = _mm256_mul_pd(d, d);
      const __m256d nrm = _mm256_hadd_pd(d2, d2);
      const __m256d num = cmul(_mm256_loadu_pd(pw + 2 * m + 4), _mm256_xor_pd(d, conj_mask));
      acc1 = _mm256_add_pd(acc1, _mm256_div_pd(num, nrm));
    }
  }
  for (; m + 2 <= n; m += 2) {
    const __m256d d = _mm256_sub_pd(zz, _mm256_loadu_pd(px + 2 * m));
    const __m256d d2 = _mm256_mul_pd(d, d);
    const __m256d nrm = _mm256_hadd_pd(d2, d2);
    const __m256d num = cmul(_mm256_loadu_pd(pw + 2 * m), _mm256_xor_pd(d, conj_mask));
    acc0 = _mm256_add_pd(acc0, _mm256_div_pd(num, nrm));
  }
  cd s = reduce2(_mm256_add_pd(acc0, acc1));
  for (; m < n; ++m) {
    const double dr = z.real() - x[m].real(), di = z.imag() - x[m].imag();
    const double inv = 1.0 / (dr * dr + di * di);
    s += cd((w[m].real() * dr + w[m].imag() * di) * inv,
            (w[m].imag() * dr - w[m].real() * di) * inv);
  }
  return s;
}

void axpy_avx2(cd alpha, const cd* x, cd* y, std::size_t n) {
  const double* px = reinterpret_cast<const double*>(x);
  double* py = reinterpret_cast<double*>(y);
  const __m256d ar = _mm256_set1_pd(alpha.real());
  const __m256d ai = _mm256_set1_pd(alpha.imag());
  std::size_t m = 0;
  for (; m + 2 <= n; m += 2) {
    const __m256d xv = _mm256_loadu_pd(px + 2 * m);
    const __m256d xs = _mm256_permute_pd(xv, 0x5);
    const __m256d p = _mm256_fmaddsub_pd(ar, xv, _mm256_mul_pd(ai, xs));
    _mm256_storeu_pd(py + 2 * m, _mm256_add_pd(_mm256_loadu_pd(py + 2 * m), p));
  }
  if (m < n) y[m] += alpha * x[m];
}

const Kernels table = {dot_avx2, dot3_avx2, cauchy_avx2, axpy_avx2};

}  // namespace

const Kernels* kernels_avx2() { return &table; }

}  // namespace levyjoint::simd

#else

namespace levyjoint::simd {
const Kernels* kernels_avx2() { return nullptr; }
}  // namespace levyjoint::simd

#endif
