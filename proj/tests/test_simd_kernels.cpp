#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "ifs/simd/kernels.hpp"

using namespace ifs::simd;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<float> random_grid(std::mt19937_64& rng, std::size_t n, bool with_negatives) {
  std::normal_distribution<float> dist(0.0f, 3.0f);
  std::vector<float> v(n);
  for (float& x : v) x = with_negatives ? dist(rng) : std::abs(dist(rng));
  return v;
}

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!avx2_kernels()) GTEST_SKIP() << "AVX2 variant unavailable on this machine";
  }
};

}  // namespace

TEST(KernelDispatch, ScalarTableIsComplete) {
  const auto& k = scalar_kernels();
  EXPECT_EQ(k.isa, Isa::scalar);
  EXPECT_NE(k.pool_sum, nullptr);
  EXPECT_NE(k.pool_max, nullptr);
  EXPECT_NE(k.dot_rows, nullptr);
}

TEST(KernelDispatch, ForceAndReset) {
  force_isa(Isa::scalar);
  EXPECT_EQ(active_kernels().isa, Isa::scalar);
  reset_isa();
  if (avx2_kernels() && !std::getenv("IFS_FORCE_SCALAR")) {
    EXPECT_EQ(active_kernels().isa, Isa::avx2);
  }
  force_isa(Isa::avx2);
  EXPECT_EQ(active_kernels().isa, avx2_kernels() ? Isa::avx2 : Isa::scalar);
  reset_isa();
}

TEST(ScalarKernels, PoolHandComputed) {
  // 2 channels, 2x3 grid.
  const std::vector<float> data{1, 2, 3, 4, 5, 6, -1, -2, -3, -4, -5, -0.5f};
  std::vector<double> out(2);
  scalar_kernels().pool_sum(data.data(), 2, 2, 3, CellWindow{0, 2, 1, 3}, out.data());
  EXPECT_EQ(out[0], 2.0 + 3 + 5 + 6);
  EXPECT_EQ(out[1], -2.0 - 3 - 5 - 0.5);
  scalar_kernels().pool_max(data.data(), 2, 2, 3, CellWindow{0, 2, 1, 3}, out.data());
  EXPECT_EQ(out[0], 6.0);
  EXPECT_EQ(out[1], -0.5);
}

TEST(ScalarKernels, DotRowsHandComputed) {
  const std::vector<double> rows{1, 2, 3, 4, 5, 6};
  const std::vector<double> q{1, 0, -1};
  std::vector<double> out(2);
  scalar_kernels().dot_rows(rows.data(), 2, 3, q.data(), out.data());
  EXPECT_EQ(out[0], -2.0);
  EXPECT_EQ(out[1], -2.0);
}

TEST_F(KernelEquivalence, PoolingBitIdenticalOnRandomWindows) {
  std::mt19937_64 rng(77);
  const auto& s = scalar_kernels();
  const auto& v = *avx2_kernels();
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t c = 1 + rng() % 70;  // covers tails shorter than a vector
    const std::size_t h = 1 + rng() % 12;
    const std::size_t w = 1 + rng() % 15;
    const auto data = random_grid(rng, c * h * w, trial % 2 == 0);
    const std::size_t r0 = rng() % h, c0 = rng() % w;
    const CellWindow win{r0, r0 + 1 + rng() % (h - r0), c0, c0 + 1 + rng() % (w - c0)};
    std::vector<double> a(c), b(c);
    s.pool_sum(data.data(), c, h, w, win, a.data());
    v.pool_sum(data.data(), c, h, w, win, b.data());
    ASSERT_TRUE(same_bits(a, b)) << "sum trial " << trial;
    s.pool_max(data.data(), c, h, w, win, a.data());
    v.pool_max(data.data(), c, h, w, win, b.data());
    ASSERT_TRUE(same_bits(a, b)) << "max trial " << trial;
  }
}

TEST_F(KernelEquivalence, PoolMaxHandlesSignedZeroAndExtremes) {
  const float big = std::numeric_limits<float>::max();
  const float tiny = std::numeric_limits<float>::denorm_min();
  // 9 channels so the tail path runs too; one cell each, then a second cell.
  std::vector<float> data(9 * 2);
  for (std::size_t ch = 0; ch < 9; ++ch) {
    data[ch * 2] = ch % 3 == 0 ? -0.0f : (ch % 3 == 1 ? -big : tiny);
    data[ch * 2 + 1] = ch % 3 == 0 ? 0.0f : (ch % 3 == 1 ? -big : -tiny);
  }
  std::vector<double> a(9), b(9);
  scalar_kernels().pool_max(data.data(), 9, 1, 2, CellWindow{0, 1, 0, 2}, a.data());
  avx2_kernels()->pool_max(data.data(), 9, 1, 2, CellWindow{0, 1, 0, 2}, b.data());
  EXPECT_TRUE(same_bits(a, b));
}

TEST_F(KernelEquivalence, DotRowsBitIdentical) {
  std::mt19937_64 rng(91);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 37;
    const std::size_t dim = 1 + rng() % 300;
    std::vector<double> rows(n * dim), q(dim);
    for (double& x : rows) x = dist(rng) * std::pow(10.0, static_cast<double>(rng() % 9) - 4.0);
    for (double& x : q) x = dist(rng);
    std::vector<double> a(n), b(n);
    scalar_kernels().dot_rows(rows.data(), n, dim, q.data(), a.data());
    avx2_kernels()->dot_rows(rows.data(), n, dim, q.data(), b.data());
    ASSERT_TRUE(same_bits(a, b)) << "trial " << trial;
  }
}
