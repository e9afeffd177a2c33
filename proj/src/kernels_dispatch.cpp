#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "hopattn/kernels.hpp"

namespace hopattn {
namespace {

std::atomic<const Kernels*> g_active{nullptr};

const Kernels* lookup(const std::string& name) {
  if (name == "scalar") return &scalar_kernels();
#if defined(HOPATTN_HAVE_AVX2)
  if (name == "avx2" && avx2_available()) return &avx2_kernels();
#endif
#if defined(HOPATTN_HAVE_NEON)
  if (name == "neon") return &neon_kernels();
#endif
  return nullptr;
}

const Kernels* pick_default() {
  if (const char* env = std::getenv("HOPATTN_KERNELS")) {
    if (const Kernels* k = lookup(env)) return k;
  }
#if defined(HOPATTN_HAVE_AVX2)
  if (avx2_available()) return &avx2_kernels();
#endif
#if defined(HOPATTN_HAVE_NEON)
  return &neon_kernels();
#else
  return &scalar_kernels();
#endif
}

}  // namespace

#if defined(HOPATTN_HAVE_AVX2)
bool avx2_available() {
#if defined(__GNUC__) || defined(__clang__)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}
#endif

const Kernels& kernels() {
  const Kernels* k = g_active.load(std::memory_order_acquire);
  if (k == nullptr) {
    k = pick_default();
    g_active.store(k, std::memory_order_release);
  }
  return *k;
}

void set_kernels(const std::string& name) {
  const Kernels* k = lookup(name);
  if (k == nullptr) throw std::invalid_argument("unknown or unsupported kernel set: " + name);
  g_active.store(k, std::memory_order_release);
}

std::vector<std::string> available_kernel_names() {
  std::vector<std::string> names{"scalar"};
#if defined(HOPATTN_HAVE_AVX2)
  if (avx2_available()) names.emplace_back("avx2");
#endif
#if defined(HOPATTN_HAVE_NEON)
  names.emplace_back("neon");
#endif
  return names;
}

}  // namespace hopattn
