#include <atomic>

#include "rem/common/error.hpp"
#include "rem/kernels/gemm.hpp"

namespace rem::kernels {
namespace {

Backend detect() noexcept { return avx2_supported() ? Backend::avx2 : Backend::scalar; }

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

}  // namespace

bool avx2_supported() noexcept {
#if defined(REM_HAVE_AVX2_KERNELS) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (backend == Backend::avx2 && !avx2_supported()) {
    throw ContractError("kernels: avx2 backend requested but not supported on this CPU");
  }
  current().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) noexcept {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc) {
  if (m == 0 || n == 0) return;
#ifdef REM_HAVE_AVX2_KERNELS
  if (active_backend() == Backend::avx2) {
    avx2::gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
#endif
  scalar::gemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

double dot(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("dot: length mismatch");
#ifdef REM_HAVE_AVX2_KERNELS
  if (active_backend() == Backend::avx2) return avx2::dot(x.data(), y.data(), x.size());
#endif
  return scalar::dot(x.data(), y.data(), x.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
#ifdef REM_HAVE_AVX2_KERNELS
  if (active_backend() == Backend::avx2) {
    avx2::axpy(alpha, x.data(), y.data(), x.size());
    return;
  }
#endif
  scalar::axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace rem::kernels
