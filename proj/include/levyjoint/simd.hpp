#pragma once
// Runtime-dispatched SIMD kernels for the complex inner loops.
//
// All heavy sums in the library reduce to four primitives over contiguous
// arrays of std::complex<double>:
//
//   dot(a,b,n)        = sum_m a[m]*b[m]                 (unconjugated)
//   dot3(a,b,c,n)     = sum_m a[m]*b[m]*c[m]
//   cauchy_sum(w,x,z) = sum_m w[m]/(z - x[m])
//   axpy(alpha,x,y,n) : y[m] += alpha*x[m]
//
// Reference scalar implementations are always available; AVX2 (x86-64) and
// NEON (aarch64) variants are selected at runtime when the CPU supports them.
// The active variant can be overridden through set_isa() or the environment
// variable LEVYJOINT_SIMD (values: scalar, avx2, neon, auto), which is useful
// for the equivalence tests.

#include <complex>
#include <cstddef>
#include <string>

namespace levyjoint::simd {

using cd = std::complex<double>;

enum class Isa { scalar, avx2, neon };

struct Kernels {
  cd (*dot)(const cd*, const cd*, std::size_t);
  cd (*dot3)(const cd*, const cd*, const cd*, std::size_t);
  cd (*cauchy_sum)(const cd*, const cd*, std::size_t, cd);
  void (*axpy)(cd, const cd*, cd*, std::size_t);
};

// Kernel tables for the individual implementations. The scalar table always
// exists; the others are null when the build does not include them.
const Kernels* kernels_scalar();
const Kernels* kernels_avx2();  // nullptr when not compiled in
const Kernels* kernels_neon();  // nullptr when not compiled in

// Active-dispatch accessors.
const Kernels& active();
Isa active_isa();
bool isa_supported(Isa isa);
bool set_isa(Isa isa);  // false (and no change) if unsupported
Isa best_supported();
const char* isa_name(Isa isa);
bool parse_isa(const std::string& s, Isa* out);  // accepts "auto" -> best

// Convenience forwarders through the active kernel table.
inline cd dot(const cd* a, const cd* b, std::size_t n) { return active().dot(a, b, n); }
inline cd dot3(const cd* a, const cd* b, const cd* c, std::size_t n) {
  return active().dot3(a, b, c, n);
}
inline cd cauchy_sum(const cd* w, const cd* x, std::size_t n, cd z) {
  return active().cauchy_sum(w, x, n, z);
}
inline void axpy(cd alpha, const cd* x, cd* y, std::size_t n) { active().axpy(alpha, x, y, n); }

}  // namespace levyjoint::simd
