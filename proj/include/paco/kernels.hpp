// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision inner loops. Every routine has a portable scalar
// reference and, where the host supports it, an AVX2+FMA (x86-64) or NEON
// (aarch64) variant. The active backend is chosen once at startup from CPU
// feature detection and can be overridden with PACO_KERNELS=scalar|avx2|neon
// or set_backend().

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace paco::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend b);

/// Whether the running CPU (and this build) can execute the backend.
bool backend_available(Backend b);

/// Best available backend, honoring PACO_KERNELS when it names an available one.
Backend detect_backend();

Backend active_backend();
void set_backend(Backend b);

// All matrices are row-major and densely packed.
struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m,n] += A[m,k] * B[k,n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // sum_i (a_i - b_i)^2
  double (*sq_dist)(const double* a, const double* b, std::size_t n);
};

const KernelTable& table(Backend b);
const KernelTable& active();

namespace scalar {
extern const KernelTable kTable;
}
#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
extern const KernelTable kTable;
}
#endif
#if defined(__aarch64__)
namespace neon {
extern const KernelTable kTable;
}
#endif

// Convenience wrappers over the active backend.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  return active().sq_dist(a.data(), b.data(), a.size());
}

}  // namespace paco::kernels
