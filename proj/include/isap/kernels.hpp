#pragma once

// Dense double-precision inner loops used by the tensor engine.
//
// Every kernel has a portable scalar reference implementation. On x86-64 an
// AVX2+FMA variant is compiled separately and selected once at startup when
// the CPU supports it. Setting ISAP_KERNELS=scalar in the environment forces
// the reference path.

#include <cstddef>
#include <string_view>

namespace isap::kernels {

/// C = op(A) * op(B) (+ C when accumulate is set).
/// op(A) is m x k, op(B) is k x n, C is m x n, all row-major with leading
/// dimensions lda, ldb, ldc measured in elements of the stored matrix.
using GemmFn = void (*)(bool trans_a, bool trans_b, std::size_t m,
                        std::size_t n, std::size_t k, const double* a,
                        std::size_t lda, const double* b, std::size_t ldb,
                        double* c, std::size_t ldc, bool accumulate);
using DotFn = double (*)(const double* x, const double* y, std::size_t n);
/// y += alpha * x
using AxpyFn = void (*)(double alpha, const double* x, double* y,
                        std::size_t n);
/// out = x * y elementwise
using MulFn = void (*)(const double* x, const double* y, double* out,
                       std::size_t n);
/// out = x + y elementwise
using AddFn = void (*)(const double* x, const double* y, double* out,
                       std::size_t n);

struct KernelTable {
  std::string_view name;
  GemmFn gemm;
  DotFn dot;
  AxpyFn axpy;
  MulFn mul;
  AddFn add;
};

const KernelTable& scalar_kernels();

/// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

/// The table chosen for this process; fixed after first call.
const KernelTable& active();

inline void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                 std::size_t k, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, double* c, std::size_t ldc,
                 bool accumulate) {
  active().gemm(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline double dot(const double* x, const double* y, std::size_t n) {
  return active().dot(x, y, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void mul(const double* x, const double* y, double* out, std::size_t n) {
  active().mul(x, y, out, n);
}
inline void add(const double* x, const double* y, double* out, std::size_t n) {
  active().add(x, y, out, n);
}

namespace detail {
const KernelTable& scalar_table();
#if defined(ISAP_HAVE_AVX2_KERNELS)
const KernelTable& avx2_table();
#endif
}  // namespace detail

}  // namespace isap::kernels
