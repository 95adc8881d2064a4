#pragma once

// Data-parallel inner loops shared by the attention and dense-layer code.
//
// Each primitive has a portable scalar reference implementation and, where the
// target supports it, a SIMD implementation (AVX2+FMA on x86-64, NEON on
// AArch64). The variant is picked once at startup from the CPU feature flags
// and can be overridden with set_isa() or the LONGDOC_ISA environment variable
// ("scalar", "avx2", "neon"). Within one ISA the reduction order is fixed, so
// results are bitwise reproducible run to run.

#include <cstddef>
#include <span>
#include <string_view>

namespace longdoc::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

// Best ISA supported by both the build and the running CPU.
Isa detected_isa();
bool isa_supported(Isa isa);

Isa active_isa();
// Throws longdoc::Error if the ISA is not available on this build/CPU.
void set_isa(Isa isa);

// RAII override used by the equivalence tests.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }
  ~ScopedIsa() { set_isa(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

// sum_i a[i] * b[i]
double dot(std::span<const double> a, std::span<const double> b);
float dot(std::span<const float> a, std::span<const float> b);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void axpy(float alpha, std::span<const float> x, std::span<float> y);

// x *= alpha
void scale(double alpha, std::span<double> x);
void scale(float alpha, std::span<float> x);

// Function table for one ISA. Exposed so tests can call a specific variant
// directly and compare it against the scalar reference. table_for() throws for
// an ISA that was not compiled in.
struct KernelTable {
  double (*dot_f64)(const double*, const double*, std::size_t);
  float (*dot_f32)(const float*, const float*, std::size_t);
  void (*axpy_f64)(double, const double*, double*, std::size_t);
  void (*axpy_f32)(float, const float*, float*, std::size_t);
  void (*scale_f64)(double, double*, std::size_t);
  void (*scale_f32)(float, float*, std::size_t);
};

const KernelTable& table_for(Isa isa);

}  // namespace longdoc::kernels
