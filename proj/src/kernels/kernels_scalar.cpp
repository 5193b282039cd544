#include "isap/kernels.hpp"

namespace isap::kernels {
namespace {

inline double at(const double* m, std::size_t ld, bool trans, std::size_t r,
                 std::size_t c) {
  return trans ? m[c * ld + r] : m[r * ld + c];
}

void gemm_ref(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
              std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += at(a, lda, trans_a, i, p) * at(b, ldb, trans_b, p, j);
      }
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + acc : acc;
    }
  }
}

double dot_ref(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_ref(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul_ref(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void add_ref(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

}  // namespace

namespace detail {
const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", gemm_ref, dot_ref, axpy_ref,
                                 mul_ref, add_ref};
  return table;
}
}  // namespace detail

}  // namespace isap::kernels
