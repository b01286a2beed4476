// AVX2 + FMA float kernels. This translation unit is compiled with
// -mavx2 -mfma; nothing here may run before cpu_has_avx2() has been checked.

#include <immintrin.h>

#include <algorithm>
#include <cstdint>
#include <cstring>

#include "c3det/simd/kernels.hpp"

namespace c3det::simd::avx2 {

namespace {

inline __m256i tail_mask(int n) {
    // lanes [0, n) active
    alignas(32) static const std::int32_t table[16] = {-1, -1, -1, -1, -1, -1, -1, -1, 0, 0, 0, 0, 0, 0, 0, 0};
    return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + 8 - n));
}

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
}

template <bool kTransA>
inline float a_at(const float* A, int lda, int i, int k) {
    if constexpr (kTransA) {
        return A[static_cast<std::ptrdiff_t>(k) * lda + i];
    } else {
        return A[static_cast<std::ptrdiff_t>(i) * lda + k];
    }
}

// Rows [i, i+R) of C, columns [j0, j1). C already holds the accumulator.
template <bool kTransA, int R>
void row_block(int i, int j0, int j1, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc) {
    int j = j0;
    for (; j + 16 <= j1; j += 16) {
        __m256 c0[R], c1[R];
        for (int r = 0; r < R; ++r) {
            float* crow = C + static_cast<std::ptrdiff_t>(i + r) * ldc + j;
            c0[r] = _mm256_loadu_ps(crow);
            c1[r] = _mm256_loadu_ps(crow + 8);
        }
        for (int k = 0; k < K; ++k) {
            const float* b = B + static_cast<std::ptrdiff_t>(k) * ldb + j;
            const __m256 b0 = _mm256_loadu_ps(b);
            const __m256 b1 = _mm256_loadu_ps(b + 8);
            for (int r = 0; r < R; ++r) {
                const __m256 a = _mm256_set1_ps(a_at<kTransA>(A, lda, i + r, k));
                c0[r] = _mm256_fmadd_ps(a, b0, c0[r]);
                c1[r] = _mm256_fmadd_ps(a, b1, c1[r]);
            }
        }
        for (int r = 0; r < R; ++r) {
            float* crow = C + static_cast<std::ptrdiff_t>(i + r) * ldc + j;
            _mm256_storeu_ps(crow, c0[r]);
            _mm256_storeu_ps(crow + 8, c1[r]);
        }
    }
    while (j < j1) {
        const int n = std::min(8, j1 - j);
        const __m256i mask = tail_mask(n);
        __m256 c0[R];
        for (int r = 0; r < R; ++r)
            c0[r] = _mm256_maskload_ps(C + static_cast<std::ptrdiff_t>(i + r) * ldc + j, mask);
        for (int k = 0; k < K; ++k) {
            const __m256 b0 = _mm256_maskload_ps(B + static_cast<std::ptrdiff_t>(k) * ldb + j, mask);
            for (int r = 0; r < R; ++r) {
                const __m256 a = _mm256_set1_ps(a_at<kTransA>(A, lda, i + r, k));
                c0[r] = _mm256_fmadd_ps(a, b0, c0[r]);
            }
        }
        for (int r = 0; r < R; ++r)
            _mm256_maskstore_ps(C + static_cast<std::ptrdiff_t>(i + r) * ldc + j, mask, c0[r]);
        j += n;
    }
}

template <bool kTransA>
void gemm_b(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool accumulate) {
    if (!accumulate) {
        for (int i = 0; i < M; ++i) std::memset(C + static_cast<std::ptrdiff_t>(i) * ldc, 0, sizeof(float) * N);
    }
    constexpr int kRows = 6;
    constexpr int kColPanel = 256;
    for (int j0 = 0; j0 < N; j0 += kColPanel) {
        const int j1 = std::min(N, j0 + kColPanel);
        int i = 0;
        for (; i + kRows <= M; i += kRows) row_block<kTransA, kRows>(i, j0, j1, K, A, lda, B, ldb, C, ldc);
        for (; i + 2 <= M; i += 2) row_block<kTransA, 2>(i, j0, j1, K, A, lda, B, ldb, C, ldc);
        for (; i < M; ++i) row_block<kTransA, 1>(i, j0, j1, K, A, lda, B, ldb, C, ldc);
    }
}

inline float dot(const float* a, const float* b, int K) {
    __m256 s0 = _mm256_setzero_ps();
    __m256 s1 = _mm256_setzero_ps();
    int k = 0;
    for (; k + 16 <= K; k += 16) {
        s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s0);
        s1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 8), _mm256_loadu_ps(b + k + 8), s1);
    }
    if (k < K) {
        const int n = std::min(8, K - k);
        const __m256i mask = tail_mask(n);
        s0 = _mm256_fmadd_ps(_mm256_maskload_ps(a + k, mask), _mm256_maskload_ps(b + k, mask), s0);
        k += n;
        if (k < K) {
            const __m256i m2 = tail_mask(K - k);
            s1 = _mm256_fmadd_ps(_mm256_maskload_ps(a + k, m2), _mm256_maskload_ps(b + k, m2), s1);
        }
    }
    return hsum(_mm256_add_ps(s0, s1));
}

}  // namespace

void gemm_nn(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool accumulate) {
    gemm_b<false>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

void gemm_tn(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool accumulate) {
    gemm_b<true>(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

void gemm_nt(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C, int ldc, bool accumulate) {
    int i = 0;
    for (; i + 2 <= M; i += 2) {
        const float* a0 = A + static_cast<std::ptrdiff_t>(i) * lda;
        const float* a1 = a0 + lda;
        int j = 0;
        for (; j + 2 <= N; j += 2) {
            const float* b0 = B + static_cast<std::ptrdiff_t>(j) * ldb;
            const float* b1 = b0 + ldb;
            __m256 s00 = _mm256_setzero_ps(), s01 = _mm256_setzero_ps();
            __m256 s10 = _mm256_setzero_ps(), s11 = _mm256_setzero_ps();
            int k = 0;
            for (; k + 8 <= K; k += 8) {
                const __m256 va0 = _mm256_loadu_ps(a0 + k);
                const __m256 va1 = _mm256_loadu_ps(a1 + k);
                const __m256 vb0 = _mm256_loadu_ps(b0 + k);
                const __m256 vb1 = _mm256_loadu_ps(b1 + k);
                s00 = _mm256_fmadd_ps(va0, vb0, s00);
                s01 = _mm256_fmadd_ps(va0, vb1, s01);
                s10 = _mm256_fmadd_ps(va1, vb0, s10);
                s11 = _mm256_fmadd_ps(va1, vb1, s11);
            }
            if (k < K) {
                const __m256i mask = tail_mask(K - k);
                const __m256 va0 = _mm256_maskload_ps(a0 + k, mask);
                const __m256 va1 = _mm256_maskload_ps(a1 + k, mask);
                const __m256 vb0 = _mm256_maskload_ps(b0 + k, mask);
                const __m256 vb1 = _mm256_maskload_ps(b1 + k, mask);
                s00 = _mm256_fmadd_ps(va0, vb0, s00);
                s01 = _mm256_fmadd_ps(va0, vb1, s01);
                s10 = _mm256_fmadd_ps(va1, vb0, s10);
                s11 = _mm256_fmadd_ps(va1, vb1, s11);
            }
            float* c0 = C + static_cast<std::ptrdiff_t>(i) * ldc + j;
            float* c1 = c0 + ldc;
            const float r00 = hsum(s00), r01 = hsum(s01), r10 = hsum(s10), r11 = hsum(s11);
            c0[0] = accumulate ? c0[0] + r00 : r00;
            c0[1] = accumulate ? c0[1] + r01 : r01;
            c1[0] = accumulate ? c1[0] + r10 : r10;
            c1[1] = accumulate ? c1[1] + r11 : r11;
        }
        for (; j < N; ++j) {
            const float* b = B + static_cast<std::ptrdiff_t>(j) * ldb;
            for (int r = 0; r < 2; ++r) {
                float& c = C[static_cast<std::ptrdiff_t>(i + r) * ldc + j];
                const float s = dot(r == 0 ? a0 : a1, b, K);
                c = accumulate ? c + s : s;
            }
        }
    }
    for (; i < M; ++i) {
        const float* a = A + static_cast<std::ptrdiff_t>(i) * lda;
        for (int j = 0; j < N; ++j) {
            float& c = C[static_cast<std::ptrdiff_t>(i) * ldc + j];
            const float s = dot(a, B + static_cast<std::ptrdiff_t>(j) * ldb, K);
            c = accumulate ? c + s : s;
        }
    }
}

void max_inplace(float* dst, const float* src, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(dst + i, _mm256_max_ps(_mm256_loadu_ps(src + i), _mm256_loadu_ps(dst + i)));
    for (; i < n; ++i) dst[i] = src[i] > dst[i] ? src[i] : dst[i];
}

void axpy(float a, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void relu(const float* x, float* y, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

}  // namespace c3det::simd::avx2
