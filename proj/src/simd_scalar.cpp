// Reference scalar kernels. These define the semantics the SIMD variants
// must reproduce (up to floating-point reassociation).

#include "levyjoint/simd.hpp"

namespace levyjoint::simd {
namespace {

cd dot_scalar(const cd* a, const cd* b, std::size_t n) {
  // Two accumulators: matches the pairwise structure of the vector variants
  // more closely and is slightly faster on the scalar path as well.
  cd s0(0.0, 0.0), s1(0.0, 0.0);
  std::size_t m = 0;
  for (; m + 1 < n; m += 2) {
    s0 += a[m] * b[m];
    s1 += a[m + 1] * b[m + 1];
  }
  if (m < n) s0 += a[m] * b[m];
  return s0 + s1;
}

cd dot3_scalar(const cd* a, const cd* b, const cd* c, std::size_t n) {
  cd s0(0.0, 0.0), s1(0.0, 0.0);
  std::size_t m = 0;
  for (; m + 1 < n; m += 2) {
    s0 += a[m] * b[m] * c[m];
    s1 += a[m + 1] * b[m + 1] * c[m + 1];
  }
  if (m < n) s0 += a[m] * b[m] * c[m];
  return s0 + s1;
}

cd cauchy_scalar(const cd* w, const cd* x, std::size_t n, cd z) {
  // w[m]/(z-x[m]) expanded through the conjugate to avoid the library's
  // overflow-guarded complex division; the grids this is used on keep
  // |z - x[m]| well away from both 0 and overflow territory.
  cd s0(0.0, 0.0), s1(0.0, 0.0);
  std::size_t m = 0;
  for (; m + 1 < n; m += 2) {
    {
      const double dr = z.real() - x[m].real(), di = z.imag() - x[m].imag();
      const double inv = 1.0 / (dr * dr + di * di);
      const double wr = w[m].real(), wi = w[m].imag();
      s0 += cd((wr * dr + wi * di) * inv, (wi * dr - wr * di) * inv);
    }
    {
      const double dr = z.real() - x[m + 1].real(), di = z.imag() - x[m + 1].imag();
      const double inv = 1.0 / (dr * dr + di * di);
      const double wr = w[m + 1].real(), wi = w[m + 1].imag();
      s1 += cd((wr * dr + wi * di) * inv, (wi * dr - wr * di) * inv);
    }
  }
  if (m < n) {
    const double dr = z.real() - x[m].real(), di = z.imag() - x[m].imag();
    const double inv = 1.0 / (dr * dr + di * di);
    const double wr = w[m].real(), wi = w[m].imag();
    s0 += cd((wr * dr + wi * di) * inv, (wi * dr - wr * di) * inv);
  }
  return s0 + s1;
}

void axpy_scalar(cd alpha, const cd* x, cd* y, std::size_t n) {
  for (std::size_t m = 0; m < n; ++m) y[m] += alpha * x[m];
}

const Kernels table = {dot_scalar, dot3_scalar, cauchy_scalar, axpy_scalar};

}  // namespace

const Kernels* kernels_scalar() { return &table; }

}  // namespace levyjoint::simd
