#pragma once

#include "ifs/simd/kernels.hpp"

namespace ifs::simd {

namespace scalar {
void pool_sum(const float*, std::size_t, std::size_t, std::size_t, CellWindow, double*);
void pool_max(const float*, std::size_t, std::size_t, std::size_t, CellWindow, double*);
void dot_rows(const double*, std::size_t, std::size_t, const double*, double*);
}  // namespace scalar

#if IFS_HAVE_AVX2
namespace avx2 {
void pool_sum(const float*, std::size_t, std::size_t, std::size_t, CellWindow, double*);
void pool_max(const float*, std::size_t, std::size_t, std::size_t, CellWindow, double*);
void dot_rows(const double*, std::size_t, std::size_t, const double*, double*);
}  // namespace avx2
#endif

}  // namespace ifs::simd
