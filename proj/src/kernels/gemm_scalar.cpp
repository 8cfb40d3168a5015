#include "rem/common/error.hpp"
#include "rem/kernels/gemm.hpp"

namespace rem::kernels::scalar {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc) {
  if (trans_a == Trans::yes && trans_b == Trans::yes) {
    throw ContractError("gemm: TT variant is not provided");
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a == Trans::no ? a[i * lda + p] : a[p * lda + i];
        const double bv = trans_b == Trans::no ? b[p * ldb + j] : b[j * ldb + p];
        s += av * bv;
      }
      double& out = c[i * ldc + j];
      out = beta == 0.0 ? alpha * s : beta * out + alpha * s;
    }
  }
}

}  // namespace rem::kernels::scalar
