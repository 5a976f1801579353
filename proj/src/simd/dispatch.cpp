#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace ifs::simd {

namespace {

constexpr KernelTable kScalar{Isa::scalar, "scalar", &scalar::pool_sum, &scalar::pool_max,
                              &scalar::dot_rows};

#if IFS_HAVE_AVX2
constexpr KernelTable kAvx2{Isa::avx2, "avx2", &avx2::pool_sum, &avx2::pool_max, &avx2::dot_rows};

bool cpu_has_avx2() {
#if defined(__GNUC__) || defined(__clang__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}
#endif

const KernelTable* detect() {
  if (const char* env = std::getenv("IFS_FORCE_SCALAR"); env && std::string(env) != "0") {
    return &kScalar;
  }
  if (const KernelTable* t = avx2_kernels()) return t;
  return &kScalar;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{detect()};
  return slot;
}

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

const KernelTable* avx2_kernels() {
#if IFS_HAVE_AVX2
  static const bool supported = cpu_has_avx2();
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() { return *active_slot().load(std::memory_order_acquire); }

void force_isa(Isa isa) {
  const KernelTable* t = &kScalar;
  if (isa == Isa::avx2 && avx2_kernels()) t = avx2_kernels();
  active_slot().store(t, std::memory_order_release);
}

void reset_isa() { active_slot().store(detect(), std::memory_order_release); }

}  // namespace ifs::simd
