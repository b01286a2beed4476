#pragma once

// Dense arithmetic kernels used by the network layers.
//
// Every kernel has a portable scalar reference (simd::scalar) and, for float,
// an AVX2+FMA variant (simd::avx2). The unqualified simd:: entry points pick
// the variant at runtime: AVX2 when the CPU reports avx2 and fma, unless
// C3DET_SIMD=scalar is set in the environment or force_isa() overrides it.
// double always takes the scalar route.
//
// Matrices are row-major with explicit leading dimensions.

#include <cstddef>

namespace c3det::simd {

enum class Isa { Scalar, Avx2 };

const char* isa_name(Isa isa) noexcept;
bool cpu_has_avx2() noexcept;
Isa active_isa() noexcept;
/// Test hook. Forcing Avx2 on a CPU without it is ignored.
void force_isa(Isa isa) noexcept;

// C[M,N] (+)= A[M,K] * B[K,N]
void gemm_nn(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool accumulate);
void gemm_nn(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C, int ldc, bool accumulate);
// C[M,N] (+)= A[K,M]^T * B[K,N]
void gemm_tn(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool accumulate);
void gemm_tn(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C, int ldc, bool accumulate);
// C[M,N] (+)= A[M,K] * B[N,K]^T
void gemm_nt(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool accumulate);
void gemm_nt(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C, int ldc, bool accumulate);

// dst[i] = max(dst[i], src[i])
void max_inplace(float* dst, const float* src, std::size_t n);
void max_inplace(double* dst, const double* src, std::size_t n);
// y[i] += a * x[i]
void axpy(float a, const float* x, float* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
// y[i] = max(x[i], 0)
void relu(const float* x, float* y, std::size_t n);
void relu(const double* x, double* y, std::size_t n);

namespace scalar {

template <class T>
void gemm_nn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<std::ptrdiff_t>(i) * ldc;
        if (!accumulate)
            for (int j = 0; j < N; ++j) c[j] = T(0);
        for (int k = 0; k < K; ++k) {
            const T a = A[static_cast<std::ptrdiff_t>(i) * lda + k];
            const T* b = B + static_cast<std::ptrdiff_t>(k) * ldb;
            for (int j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

template <class T>
void gemm_tn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<std::ptrdiff_t>(i) * ldc;
        if (!accumulate)
            for (int j = 0; j < N; ++j) c[j] = T(0);
        for (int k = 0; k < K; ++k) {
            const T a = A[static_cast<std::ptrdiff_t>(k) * lda + i];
            const T* b = B + static_cast<std::ptrdiff_t>(k) * ldb;
            for (int j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

template <class T>
void gemm_nt(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        const T* a = A + static_cast<std::ptrdiff_t>(i) * lda;
        for (int j = 0; j < N; ++j) {
            const T* b = B + static_cast<std::ptrdiff_t>(j) * ldb;
            T s = T(0);
            for (int k = 0; k < K; ++k) s += a[k] * b[k];
            T& c = C[static_cast<std::ptrdiff_t>(i) * ldc + j];
            c = accumulate ? c + s : s;
        }
    }
}

template <class T>
void max_inplace(T* dst, const T* src, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > dst[i] ? src[i] : dst[i];
}

template <class T>
void axpy(T a, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void relu(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

}  // namespace scalar

namespace avx2 {

// Only callable when cpu_has_avx2() is true.
void gemm_nn(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool accumulate);
void gemm_tn(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool accumulate);
void gemm_nt(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool accumulate);
void max_inplace(float* dst, const float* src, std::size_t n);
void axpy(float a, const float* x, float* y, std::size_t n);
void relu(const float* x, float* y, std::size_t n);

}  // namespace avx2

}  // namespace c3det::simd
