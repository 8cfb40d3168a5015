// Compiled with -mavx2 -mfma; only reached after a CPUID check.
#include <immintrin.h>

#include <vector>

#include "rem/common/error.hpp"
#include "rem/kernels/gemm.hpp"

namespace rem::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double dot(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i,
                     _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

namespace {

// 4x8 register tile: C[i0..i0+4, j0..j0+8] (+)= alpha * sum_p A(i, p) * B[p, j].
// A(i, p) is a[i * lda + p] (kTransA false) or a[p * lda + i].
template <bool kTransA>
inline void tile_4x8(std::size_t i0, std::size_t j0, std::size_t k, double alpha,
                     const double* a, std::size_t lda, const double* b, std::size_t ldb,
                     bool accumulate, double* c, std::size_t ldc) {
  __m256d acc[4][2];
  for (auto& r : acc) r[0] = r[1] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb + j0;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    for (std::size_t r = 0; r < 4; ++r) {
      const double av = kTransA ? a[p * lda + i0 + r] : a[(i0 + r) * lda + p];
      const __m256d va = _mm256_set1_pd(av);
      acc[r][0] = _mm256_fmadd_pd(va, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_pd(va, b1, acc[r][1]);
    }
  }
  const __m256d va = _mm256_set1_pd(alpha);
  for (std::size_t r = 0; r < 4; ++r) {
    double* crow = c + (i0 + r) * ldc + j0;
    __m256d lo = _mm256_mul_pd(va, acc[r][0]);
    __m256d hi = _mm256_mul_pd(va, acc[r][1]);
    if (accumulate) {
      lo = _mm256_add_pd(lo, _mm256_loadu_pd(crow));
      hi = _mm256_add_pd(hi, _mm256_loadu_pd(crow + 4));
    }
    _mm256_storeu_pd(crow, lo);
    _mm256_storeu_pd(crow + 4, hi);
  }
}

// Remainder rows/columns, one output at a time.
template <bool kTransA>
inline void edge(std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1,
                 std::size_t k, double alpha, const double* a, std::size_t lda,
                 const double* b, std::size_t ldb, bool accumulate, double* c,
                 std::size_t ldc) {
  for (std::size_t i = i0; i < i1; ++i) {
    for (std::size_t j = j0; j < j1; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        s += (kTransA ? a[p * lda + i] : a[i * lda + p]) * b[p * ldb + j];
      }
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + alpha * s : alpha * s;
    }
  }
}

template <bool kTransA>
void gemm_n(std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
            std::size_t lda, const double* b, std::size_t ldb, bool accumulate, double* c,
            std::size_t ldc) {
  const std::size_t m4 = m - m % 4;
  const std::size_t n8 = n - n % 8;
  for (std::size_t i = 0; i < m4; i += 4) {
    for (std::size_t j = 0; j < n8; j += 8) {
      tile_4x8<kTransA>(i, j, k, alpha, a, lda, b, ldb, accumulate, c, ldc);
    }
  }
  if (n8 < n) edge<kTransA>(0, m4, n8, n, k, alpha, a, lda, b, ldb, accumulate, c, ldc);
  if (m4 < m) edge<kTransA>(m4, m, 0, n, k, alpha, a, lda, b, ldb, accumulate, c, ldc);
}

}  // namespace

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc) {
  if (trans_a == Trans::yes && trans_b == Trans::yes) {
    throw ContractError("gemm: TT variant is not provided");
  }
  const bool accumulate = beta != 0.0;
  if (trans_b == Trans::yes) {
    // Pack B^T (k x n) once, then reuse the NN tile.
    thread_local std::vector<double> packed;
    packed.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * ldb;
      for (std::size_t p = 0; p < k; ++p) packed[p * n + j] = brow[p];
    }
    gemm_n<false>(m, n, k, alpha, a, lda, packed.data(), n, accumulate, c, ldc);
    return;
  }
  if (trans_a == Trans::yes) {
    gemm_n<true>(m, n, k, alpha, a, lda, b, ldb, accumulate, c, ldc);
  } else {
    gemm_n<false>(m, n, k, alpha, a, lda, b, ldb, accumulate, c, ldc);
  }
}

}  // namespace rem::kernels::avx2
