// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma
// and must only be entered after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "isap/kernels.hpp"

namespace isap::kernels {
namespace {

// Copies op(M) (rows x cols) into a dense row-major buffer.
void pack(const double* m, std::size_t ld, bool trans, std::size_t rows,
          std::size_t cols, std::vector<double>& out) {
  out.resize(rows * cols);
  if (trans) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = m[c * ld + r];
  } else {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(m + r * ld, m + r * ld + cols, out.data() + r * cols);
  }
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline void store_tile(double* c, __m256d v, bool accumulate) {
  if (accumulate) v = _mm256_add_pd(_mm256_loadu_pd(c), v);
  _mm256_storeu_pd(c, v);
}

// 4 x 8 register tile over the full k extent.
inline void tile_4x8(std::size_t k, const double* a, std::size_t lda,
                     const double* b, std::size_t ldb, double* c,
                     std::size_t ldc, bool accumulate) {
  __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
  __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
  __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
  __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  store_tile(c, c00, accumulate);
  store_tile(c + 4, c01, accumulate);
  store_tile(c + ldc, c10, accumulate);
  store_tile(c + ldc + 4, c11, accumulate);
  store_tile(c + 2 * ldc, c20, accumulate);
  store_tile(c + 2 * ldc + 4, c21, accumulate);
  store_tile(c + 3 * ldc, c30, accumulate);
  store_tile(c + 3 * ldc + 4, c31, accumulate);
}

// 1 x 8 tile for leftover rows.
inline void tile_1x8(std::size_t k, const double* a, const double* b,
                     std::size_t ldb, double* c, bool accumulate) {
  __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d av = _mm256_broadcast_sd(a + p);
    c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb), c0);
    c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb + 4), c1);
  }
  store_tile(c, c0, accumulate);
  store_tile(c + 4, c1, accumulate);
}

void gemm_avx2(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
               std::size_t k, const double* a, std::size_t lda, const double* b,
               std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  thread_local std::vector<double> a_buf;
  thread_local std::vector<double> b_buf;
  if (trans_a) {
    pack(a, lda, true, m, k, a_buf);
    a = a_buf.data();
    lda = k;
  }
  if (trans_b) {
    pack(b, ldb, true, k, n, b_buf);
    b = b_buf.data();
    ldb = n;
  }
  const std::size_t n8 = n - n % 8;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    for (std::size_t j = 0; j < n8; j += 8)
      tile_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc,
               accumulate);
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n8; j += 8)
      tile_1x8(k, a + i * lda, b + j, ldb, c + i * ldc + j, accumulate);
  }
  if (n8 == n) return;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = n8; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[r * lda + p] * b[p * ldb + j];
      c[r * ldc + j] = accumulate ? c[r * ldc + j] + acc : acc;
    }
  }
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                           _mm256_loadu_pd(y + i + 4), acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void mul_avx2(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void add_avx2(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

}  // namespace

namespace detail {
const KernelTable& avx2_table() {
  static const KernelTable table{"avx2", gemm_avx2, dot_avx2, axpy_avx2,
                                 mul_avx2, add_avx2};
  return table;
}
}  // namespace detail

}  // namespace isap::kernels
