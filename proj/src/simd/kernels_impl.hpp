#pragma once

#include <algorithm>

#include "coper/simd/kernels.hpp"

namespace coper::simd::detail {

const KernelTable& scalar_table();

#if defined(COPER_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

}  // namespace coper::simd::detail
