// Runtime selection of the kernel implementation.
//
// Default: the best ISA the CPU supports, overridable via LEVYJOINT_SIMD
// (scalar | avx2 | neon | auto) or set_isa(). Dispatch state is process-wide;
// tests flip it explicitly when comparing implementations.

#include "levyjoint/simd.hpp"

#include <atomic>
#include <cstdlib>

namespace levyjoint::simd {
namespace {

std::atomic<const Kernels*> g_active{nullptr};
std::atomic<Isa> g_active_isa{Isa::scalar};

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Kernels* table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar: return kernels_scalar();
    case Isa::avx2: return kernels_avx2();
    case Isa::neon: return kernels_neon();
  }
  return nullptr;
}

void init_from_env() {
  Isa isa = best_supported();
  if (const char* env = std::getenv("LEVYJOINT_SIMD")) {
    Isa parsed;
    if (parse_isa(env, &parsed) && isa_supported(parsed)) isa = parsed;
  }
  g_active.store(table_for(isa), std::memory_order_relaxed);
  g_active_isa.store(isa, std::memory_order_relaxed);
}

}  // namespace

bool isa_supported(Isa isa) {
  if (table_for(isa) == nullptr) return false;
  if (isa == Isa::avx2) return cpu_has_avx2();
  return true;  // scalar always; neon table only exists on aarch64 builds
}

Isa best_supported() {
  if (isa_supported(Isa::avx2)) return Isa::avx2;
  if (isa_supported(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

const Kernels& active() {
  const Kernels* k = g_active.load(std::memory_order_relaxed);
  if (k == nullptr) {
    init_from_env();
    k = g_active.load(std::memory_order_relaxed);
  }
  return *k;
}

Isa active_isa() {
  if (g_active.load(std::memory_order_relaxed) == nullptr) init_from_env();
  return g_active_isa.load(std::memory_order_relaxed);
}

bool set_isa(Isa isa) {
  if (!isa_supported(isa)) return false;
  g_active.store(table_for(isa), std::memory_order_relaxed);
  g_active_isa.store(isa, std::memory_order_relaxed);
  return true;
}

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "?";
}

bool parse_isa(const std::string& s, Isa* out) {
  if (s == "scalar") { *out = Isa::scalar; return true; }
  if (s == "avx2") { *out = Isa::avx2; return true; }
  if (s == "neon") { *out = Isa::neon; return true; }
  if (s == "auto") { *out = best_supported(); return true; }
  return false;
}

}  // namespace levyjoint::simd
