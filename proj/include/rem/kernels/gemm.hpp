#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Dense double-precision kernels behind the autodiff engine.
//
// Every kernel exists twice: a portable scalar reference and an AVX2/FMA
// variant. The variant is chosen once at startup from CPUID and can be
// overridden (tests pin both and compare). The two backends differ only in
// summation order, so results agree to rounding, not bitwise; a single
// process always uses one backend, which keeps runs reproducible.
namespace rem::kernels {

enum class Backend { scalar, avx2 };

enum class Trans { no, yes };

bool avx2_supported() noexcept;
Backend active_backend() noexcept;
// Throws ContractError when asking for avx2 on a CPU without it.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend) noexcept;

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C, with op(A) m x k and
// op(B) k x n. Leading dimensions are row strides in elements. Supported
// combinations: NN, NT, TN. beta must be 0 or 1; beta 0 ignores prior C.
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc);

double dot(std::span<const double> x, std::span<const double> y);

// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Per-backend entry points, exposed for equivalence tests.
namespace scalar {
void gemm(Trans, Trans, std::size_t, std::size_t, std::size_t, double, const double*,
          std::size_t, const double*, std::size_t, double, double*, std::size_t);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
void gemm(Trans, Trans, std::size_t, std::size_t, std::size_t, double, const double*,
          std::size_t, const double*, std::size_t, double, double*, std::size_t);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

}  // namespace rem::kernels
