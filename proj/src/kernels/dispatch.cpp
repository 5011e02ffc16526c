#include <atomic>
#include <cstdlib>
#include <string_view>

#include "momo/kernels.hpp"

namespace momo::kernels {

#ifdef MOMO_HAVE_AVX2
const KernelTable& avx2_table_impl() noexcept;
#endif

const KernelTable* avx2_table() noexcept {
#ifdef MOMO_HAVE_AVX2
  return &avx2_table_impl();
#else
  return nullptr;
#endif
}

bool cpu_has_avx2() noexcept {
#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* pick_default() noexcept {
  const char* env = std::getenv("MOMO_KERNELS");
  if (env != nullptr && std::string_view(env) == "scalar") return &scalar_table();
  if (avx2_table() != nullptr && cpu_has_avx2()) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() noexcept {
  static std::atomic<const KernelTable*> current{pick_default()};
  return current;
}

}  // namespace

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

bool select(std::string_view name) noexcept {
  if (name == "scalar") {
    slot().store(&scalar_table(), std::memory_order_release);
    return true;
  }
  if (name == "avx2" && avx2_table() != nullptr && cpu_has_avx2()) {
    slot().store(avx2_table(), std::memory_order_release);
    return true;
  }
  return false;
}

}  // namespace momo::kernels
