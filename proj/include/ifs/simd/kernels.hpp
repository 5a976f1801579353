#pragma once

// Inner-loop kernels with a scalar reference and an AVX2 variant chosen at
// runtime. Every variant accumulates each output lane in the same order as
// the scalar loop, so results are bit-identical across variants:
//   - pooling vectorizes across channels (one lane per channel, cells
//     visited row-major),
//   - dot products vectorize across rows (one lane per row, dimensions
//     visited in order).
// The build disables floating-point contraction so no variant fuses
// multiply-add where the reference does not.

#include <cstddef>
#include <string_view>

namespace ifs::simd {

// Half-open cell window on a channel-major C x H x W grid.
struct CellWindow {
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
  std::size_t col_begin = 0;
  std::size_t col_end = 0;
};

// out[c] = sum (as double) / max over the window of channel c.
using PoolFn = void (*)(const float* data, std::size_t channels, std::size_t height,
                        std::size_t width, CellWindow window, double* out);

// out[r] = sum_d rows[r * dim + d] * query[d], accumulated in order of d.
using DotRowsFn = void (*)(const double* rows, std::size_t num_rows, std::size_t dim,
                           const double* query, double* out);

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  std::string_view name;
  PoolFn pool_sum;
  PoolFn pool_max;
  DotRowsFn dot_rows;
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_kernels();

// Best table for this CPU unless overridden by force_isa() or the
// IFS_FORCE_SCALAR environment variable.
const KernelTable& active_kernels();
void force_isa(Isa isa);
void reset_isa();

}  // namespace ifs::simd
