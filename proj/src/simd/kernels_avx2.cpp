// Compiled with -mavx2 (no FMA); only reached after a runtime CPU check.
#include "kernels_impl.hpp"

#include <immintrin.h>

#include <cstdint>
#include <limits>

namespace ifs::simd::avx2 {

namespace {

// Gather offsets must fit a signed 32-bit index.
bool gather_fits(std::size_t plane) {
  return plane <= static_cast<std::size_t>(std::numeric_limits<std::int32_t>::max() / 8);
}

__m256i channel_offsets(std::size_t plane) {
  const auto p = static_cast<std::int32_t>(plane);
  return _mm256_setr_epi32(0, p, 2 * p, 3 * p, 4 * p, 5 * p, 6 * p, 7 * p);
}

}  // namespace

void pool_sum(const float* data, std::size_t channels, std::size_t height, std::size_t width,
              CellWindow w, double* out) {
  const std::size_t plane = height * width;
  if (!gather_fits(plane)) {
    scalar::pool_sum(data, channels, height, width, w, out);
    return;
  }
  const __m256i offsets = channel_offsets(plane);
  std::size_t c = 0;
  for (; c + 8 <= channels; c += 8) {
    const float* base = data + c * plane;
    __m256d lo = _mm256_setzero_pd();
    __m256d hi = _mm256_setzero_pd();
    for (std::size_t r = w.row_begin; r < w.row_end; ++r) {
      for (std::size_t col = w.col_begin; col < w.col_end; ++col) {
        const __m256 v = _mm256_i32gather_ps(base + r * width + col, offsets, 4);
        lo = _mm256_add_pd(lo, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
        hi = _mm256_add_pd(hi, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
      }
    }
    _mm256_storeu_pd(out + c, lo);
    _mm256_storeu_pd(out + c + 4, hi);
  }
  if (c < channels) {
    scalar::pool_sum(data + c * plane, channels - c, height, width, w, out + c);
  }
}

void pool_max(const float* data, std::size_t channels, std::size_t height, std::size_t width,
              CellWindow w, double* out) {
  const std::size_t plane = height * width;
  if (!gather_fits(plane)) {
    scalar::pool_max(data, channels, height, width, w, out);
    return;
  }
  const __m256i offsets = channel_offsets(plane);
  std::size_t c = 0;
  for (; c + 8 <= channels; c += 8) {
    const float* base = data + c * plane;
    __m256 acc = _mm256_set1_ps(-std::numeric_limits<float>::infinity());
    for (std::size_t r = w.row_begin; r < w.row_end; ++r) {
      for (std::size_t col = w.col_begin; col < w.col_end; ++col) {
        const __m256 v = _mm256_i32gather_ps(base + r * width + col, offsets, 4);
        // maxps(a, b) returns a only when a > b, the scalar select.
        acc = _mm256_max_ps(v, acc);
      }
    }
    _mm256_storeu_pd(out + c, _mm256_cvtps_pd(_mm256_castps256_ps128(acc)));
    _mm256_storeu_pd(out + c + 4, _mm256_cvtps_pd(_mm256_extractf128_ps(acc, 1)));
  }
  if (c < channels) {
    scalar::pool_max(data + c * plane, channels - c, height, width, w, out + c);
  }
}

void dot_rows(const double* rows, std::size_t num_rows, std::size_t dim, const double* query,
              double* out) {
  std::size_t r = 0;
  for (; r + 4 <= num_rows; r += 4) {
    const double* r0 = rows + r * dim;
    const double* r1 = r0 + dim;
    const double* r2 = r1 + dim;
    const double* r3 = r2 + dim;
    __m256d acc = _mm256_setzero_pd();
    std::size_t d = 0;
    for (; d + 4 <= dim; d += 4) {
      // 4x4 transpose so lane k holds row k; dimensions stay in order.
      const __m256d a = _mm256_loadu_pd(r0 + d);
      const __m256d b = _mm256_loadu_pd(r1 + d);
      const __m256d c = _mm256_loadu_pd(r2 + d);
      const __m256d e = _mm256_loadu_pd(r3 + d);
      const __m256d t0 = _mm256_unpacklo_pd(a, b);
      const __m256d t1 = _mm256_unpackhi_pd(a, b);
      const __m256d t2 = _mm256_unpacklo_pd(c, e);
      const __m256d t3 = _mm256_unpackhi_pd(c, e);
      const __m256d col0 = _mm256_permute2f128_pd(t0, t2, 0x20);
      const __m256d col1 = _mm256_permute2f128_pd(t1, t3, 0x20);
      const __m256d col2 = _mm256_permute2f128_pd(t0, t2, 0x31);
      const __m256d col3 = _mm256_permute2f128_pd(t1, t3, 0x31);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(query[d]), col0));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(query[d + 1]), col1));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(query[d + 2]), col2));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(query[d + 3]), col3));
    }
    for (; d < dim; ++d) {
      const __m256d col = _mm256_setr_pd(r0[d], r1[d], r2[d], r3[d]);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(query[d]), col));
    }
    _mm256_storeu_pd(out + r, acc);
  }
  if (r < num_rows) scalar::dot_rows(rows + r * dim, num_rows - r, dim, query, out + r);
}

}  // namespace ifs::simd::avx2
