#include <atomic>
#include <cassert>
#include <cstdlib>
#include <string>

#include "longdoc/error.hpp"
#include "tables.hpp"

namespace longdoc::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(LONGDOC_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa isa_from_env(Isa fallback) {
  const char* env = std::getenv("LONGDOC_ISA");
  if (env == nullptr) return fallback;
  std::string v(env);
  Isa wanted = fallback;
  if (v == "scalar") wanted = Isa::scalar;
  else if (v == "avx2") wanted = Isa::avx2;
  else if (v == "neon") wanted = Isa::neon;
  return isa_supported(wanted) ? wanted : fallback;
}

std::atomic<const KernelTable*>& active_table() {
  static std::atomic<const KernelTable*> table{&table_for(isa_from_env(detected_isa()))};
  return table;
}

std::atomic<Isa>& active_isa_slot() {
  static std::atomic<Isa> isa{isa_from_env(detected_isa())};
  return isa;
}

const KernelTable& current() { return *active_table().load(std::memory_order_relaxed); }

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: return cpu_has_avx2();
    case Isa::neon:
#if defined(LONGDOC_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa detected_isa() {
  if (isa_supported(Isa::avx2)) return Isa::avx2;
  if (isa_supported(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

const KernelTable& table_for(Isa isa) {
  switch (isa) {
    case Isa::scalar: return scalar::table;
    case Isa::avx2:
#if defined(LONGDOC_HAVE_AVX2)
      return avx2::table;
#else
      break;
#endif
    case Isa::neon:
#if defined(LONGDOC_HAVE_NEON)
      return neon::table;
#else
      break;
#endif
  }
  throw Error("kernels", std::string("ISA not compiled in: ") + std::string(isa_name(isa)));
}

Isa active_isa() { return active_isa_slot().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw Error("kernels", std::string("ISA not supported on this CPU: ") + std::string(isa_name(isa)));
  }
  active_table().store(&table_for(isa), std::memory_order_relaxed);
  active_isa_slot().store(isa, std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return current().dot_f64(a.data(), b.data(), a.size());
}

float dot(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  return current().dot_f32(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  current().axpy_f64(alpha, x.data(), y.data(), x.size());
}

void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  assert(x.size() == y.size());
  current().axpy_f32(alpha, x.data(), y.data(), x.size());
}

void scale(double alpha, std::span<double> x) { current().scale_f64(alpha, x.data(), x.size()); }
void scale(float alpha, std::span<float> x) { current().scale_f32(alpha, x.data(), x.size()); }

}  // namespace longdoc::kernels
