#include "kernels_impl.hpp"

#include <limits>

namespace ifs::simd::scalar {

void pool_sum(const float* data, std::size_t channels, std::size_t height, std::size_t width,
              CellWindow w, double* out) {
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    const float* ch = data + c * plane;
    double acc = 0.0;
    for (std::size_t r = w.row_begin; r < w.row_end; ++r) {
      for (std::size_t col = w.col_begin; col < w.col_end; ++col) {
        acc += static_cast<double>(ch[r * width + col]);
      }
    }
    out[c] = acc;
  }
}

void pool_max(const float* data, std::size_t channels, std::size_t height, std::size_t width,
              CellWindow w, double* out) {
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    const float* ch = data + c * plane;
    float acc = -std::numeric_limits<float>::infinity();
    for (std::size_t r = w.row_begin; r < w.row_end; ++r) {
      for (std::size_t col = w.col_begin; col < w.col_end; ++col) {
        const float v = ch[r * width + col];
        acc = v > acc ? v : acc;
      }
    }
    out[c] = static_cast<double>(acc);
  }
}

void dot_rows(const double* rows, std::size_t num_rows, std::size_t dim, const double* query,
              double* out) {
  for (std::size_t r = 0; r < num_rows; ++r) {
    const double* row = rows + r * dim;
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) acc += query[d] * row[d];
    out[r] = acc;
  }
}

}  // namespace ifs::simd::scalar
