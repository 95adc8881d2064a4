#pragma once

#include "longdoc/kernels.hpp"

namespace longdoc::kernels {

namespace scalar {
extern const KernelTable table;
}
#if defined(LONGDOC_HAVE_AVX2)
namespace avx2 {
extern const KernelTable table;
}
#endif
#if defined(LONGDOC_HAVE_NEON)
namespace neon {
extern const KernelTable table;
}
#endif

}  // namespace longdoc::kernels
