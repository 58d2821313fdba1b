// SPDX-License-Identifier: Apache-2.0

#include "paco/tensor.hpp"

#include <cstdint>
#include <cstring>

#include "paco/kernels.hpp"

namespace paco {

std::string shape_str(const Matrix& m) {
  return "[" + std::to_string(m.rows) + ", " + std::to_string(m.cols) + "]";
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
  Matrix c(a.rows, b.cols);
  kernels::active().gemm_nn(a.rows, b.cols, a.cols, a.data.data(), b.data.data(), c.data.data());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols)
    throw ShapeError("matmul_nt: " + shape_str(a) + " x " + shape_str(b) + "^T");
  Matrix c(a.rows, b.rows);
  kernels::active().gemm_nt(a.rows, b.rows, a.cols, a.data.data(), b.data.data(), c.data.data());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows)
    throw ShapeError("matmul_tn: " + shape_str(a) + "^T x " + shape_str(b));
  Matrix c(a.cols, b.cols);
  kernels::active().gemm_tn(a.cols, b.cols, a.rows, a.data.data(), b.data.data(), c.data.data());
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t r = 0; r < a.rows; ++r)
    for (std::size_t c = 0; c < a.cols; ++c) t(c, r) = a(r, c);
  return t;
}

std::uint64_t checksum(std::span<const double> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (double v : values) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace paco
