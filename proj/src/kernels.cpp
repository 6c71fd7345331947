#include "lesa/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace lesa::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(LESA_BUILD_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend env_backend() {
  const char* v = std::getenv("LESA_KERNELS");
  if (v == nullptr) return Backend::Auto;
  if (std::strcmp(v, "scalar") == 0) return Backend::Scalar;
  if (std::strcmp(v, "avx2") == 0) return Backend::Avx2;
  return Backend::Auto;
}

const Ops* resolve(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return &scalar_ops();
    case Backend::Avx2:
      return avx2_supported() ? &avx2_ops() : &scalar_ops();
    case Backend::Auto:
    default:
      return avx2_supported() ? &avx2_ops() : &scalar_ops();
  }
}

std::atomic<const Ops*> g_active{nullptr};

}  // namespace

bool avx2_supported() {
  static const bool ok = cpu_has_avx2();
  return ok;
}

const Ops& active() {
  const Ops* ops = g_active.load(std::memory_order_acquire);
  if (ops == nullptr) {
    ops = resolve(env_backend());
    g_active.store(ops, std::memory_order_release);
  }
  return *ops;
}

void set_backend(Backend b) {
  g_active.store(resolve(b), std::memory_order_release);
}

}  // namespace lesa::kernels
