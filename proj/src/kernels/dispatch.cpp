// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>

#include "paco/kernels.hpp"

namespace paco::kernels {

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if (defined(__x86_64__) || defined(_M_X64)) && defined(__GNUC__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend detect_backend() {
  if (const char* env = std::getenv("PACO_KERNELS")) {
    const std::string want(env);
    for (Backend b : {Backend::kScalar, Backend::kAvx2, Backend::kNeon})
      if (want == backend_name(b) && backend_available(b)) return b;
  }
  if (backend_available(Backend::kAvx2)) return Backend::kAvx2;
  if (backend_available(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

const KernelTable& table(Backend b) {
  switch (b) {
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::kAvx2:
      return avx2::kTable;
#endif
#if defined(__aarch64__)
    case Backend::kNeon:
      return neon::kTable;
#endif
    default:
      return scalar::kTable;
  }
}

namespace {

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table(detect_backend())};
  return slot;
}

std::atomic<Backend>& active_backend_slot() {
  static std::atomic<Backend> slot{detect_backend()};
  return slot;
}

}  // namespace

Backend active_backend() { return active_backend_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b)) b = Backend::kScalar;
  active_backend_slot().store(b, std::memory_order_relaxed);
  active_slot().store(&table(b), std::memory_order_relaxed);
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

}  // namespace paco::kernels
