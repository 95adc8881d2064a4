// Scalar reference kernels. Single accumulator, left-to-right order; this is
// the order every SIMD variant is compared against.

#include "tables.hpp"

namespace longdoc::kernels::scalar {
namespace {

template <class T>
T dot_impl(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void axpy_impl(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale_impl(T alpha, T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

}  // namespace

const KernelTable table{
    &dot_impl<double>,  &dot_impl<float>,    &axpy_impl<double>,
    &axpy_impl<float>,  &scale_impl<double>, &scale_impl<float>,
};

}  // namespace longdoc::kernels::scalar
