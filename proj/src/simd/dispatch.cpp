#include <atomic>
#include <cstdlib>
#include <cstring>

#include "c3det/simd/kernels.hpp"

namespace c3det::simd {

namespace {

Isa detect() noexcept {
    const char* env = std::getenv("C3DET_SIMD");
    if (env && std::strcmp(env, "scalar") == 0) return Isa::Scalar;
    return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() noexcept {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

}  // namespace

const char* isa_name(Isa isa) noexcept { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) noexcept {
    if (isa == Isa::Avx2 && !cpu_has_avx2()) return;
    current().store(isa, std::memory_order_relaxed);
}

#define C3DET_DISPATCH(call_avx2, call_scalar) \
    if (active_isa() == Isa::Avx2) {           \
        call_avx2;                             \
    } else {                                   \
        call_scalar;                           \
    }

void gemm_nn(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool acc) {
    C3DET_DISPATCH(avx2::gemm_nn(M, N, K, A, lda, B, ldb, C, ldc, acc),
                   scalar::gemm_nn(M, N, K, A, lda, B, ldb, C, ldc, acc))
}
void gemm_tn(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool acc) {
    C3DET_DISPATCH(avx2::gemm_tn(M, N, K, A, lda, B, ldb, C, ldc, acc),
                   scalar::gemm_tn(M, N, K, A, lda, B, ldb, C, ldc, acc))
}
void gemm_nt(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool acc) {
    C3DET_DISPATCH(avx2::gemm_nt(M, N, K, A, lda, B, ldb, C, ldc, acc),
                   scalar::gemm_nt(M, N, K, A, lda, B, ldb, C, ldc, acc))
}
void max_inplace(float* dst, const float* src, std::size_t n) {
    C3DET_DISPATCH(avx2::max_inplace(dst, src, n), scalar::max_inplace(dst, src, n))
}
void axpy(float a, const float* x, float* y, std::size_t n) {
    C3DET_DISPATCH(avx2::axpy(a, x, y, n), scalar::axpy(a, x, y, n))
}
void relu(const float* x, float* y, std::size_t n) {
    C3DET_DISPATCH(avx2::relu(x, y, n), scalar::relu(x, y, n))
}

#undef C3DET_DISPATCH

void gemm_nn(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C, int ldc, bool acc) {
    scalar::gemm_nn(M, N, K, A, lda, B, ldb, C, ldc, acc);
}
void gemm_tn(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C, int ldc, bool acc) {
    scalar::gemm_tn(M, N, K, A, lda, B, ldb, C, ldc, acc);
}
void gemm_nt(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C, int ldc, bool acc) {
    scalar::gemm_nt(M, N, K, A, lda, B, ldb, C, ldc, acc);
}
void max_inplace(double* dst, const double* src, std::size_t n) { scalar::max_inplace(dst, src, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { scalar::axpy(a, x, y, n); }
void relu(const double* x, double* y, std::size_t n) { scalar::relu(x, y, n); }

}  // namespace c3det::simd
