#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "c3det/core/random.hpp"
#include "c3det/simd/kernels.hpp"

using namespace c3det;

namespace {

std::vector<float> rand_vec(RandomSource& rng, std::size_t n) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.normal());
    return v;
}

// Tolerance for float GEMM with different summation order and FMA.
void expect_close(const std::vector<float>& a, const std::vector<float>& b, int K) {
    ASSERT_EQ(a.size(), b.size());
    const float tol = 1e-5f * static_cast<float>(K) + 1e-5f;
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol * (1.0f + std::abs(a[i]))) << "at " << i;
}

// Shapes exercising full microkernel tiles, row tails and masked column tails.
const int kShapes[][3] = {{1, 1, 1}, {6, 16, 8}, {7, 17, 9}, {13, 33, 5}, {2, 255, 31}, {17, 300, 64}, {32, 4096, 27},
                          {5, 3, 100}, {64, 64, 288}};

}  // namespace

class SimdEquivalence : public ::testing::Test {
protected:
    void SetUp() override {
        if (!simd::cpu_has_avx2()) GTEST_SKIP() << "no AVX2 on this CPU";
    }
};

TEST_F(SimdEquivalence, GemmNn) {
    RandomSource rng(1, "nn");
    for (const auto& s : kShapes) {
        const int M = s[0], N = s[1], K = s[2];
        const auto A = rand_vec(rng, static_cast<std::size_t>(M) * K);
        const auto B = rand_vec(rng, static_cast<std::size_t>(K) * N);
        for (bool acc : {false, true}) {
            auto C0 = rand_vec(rng, static_cast<std::size_t>(M) * N);
            auto C1 = C0;
            simd::scalar::gemm_nn(M, N, K, A.data(), K, B.data(), N, C0.data(), N, acc);
            simd::avx2::gemm_nn(M, N, K, A.data(), K, B.data(), N, C1.data(), N, acc);
            expect_close(C0, C1, K);
        }
    }
}

TEST_F(SimdEquivalence, GemmTn) {
    RandomSource rng(2, "tn");
    for (const auto& s : kShapes) {
        const int M = s[0], N = s[1], K = s[2];
        const auto A = rand_vec(rng, static_cast<std::size_t>(K) * M);
        const auto B = rand_vec(rng, static_cast<std::size_t>(K) * N);
        for (bool acc : {false, true}) {
            auto C0 = rand_vec(rng, static_cast<std::size_t>(M) * N);
            auto C1 = C0;
            simd::scalar::gemm_tn(M, N, K, A.data(), M, B.data(), N, C0.data(), N, acc);
            simd::avx2::gemm_tn(M, N, K, A.data(), M, B.data(), N, C1.data(), N, acc);
            expect_close(C0, C1, K);
        }
    }
}

TEST_F(SimdEquivalence, GemmNt) {
    RandomSource rng(3, "nt");
    for (const auto& s : kShapes) {
        const int M = s[0], N = s[1], K = s[2];
        const auto A = rand_vec(rng, static_cast<std::size_t>(M) * K);
        const auto B = rand_vec(rng, static_cast<std::size_t>(N) * K);
        for (bool acc : {false, true}) {
            auto C0 = rand_vec(rng, static_cast<std::size_t>(M) * N);
            auto C1 = C0;
            simd::scalar::gemm_nt(M, N, K, A.data(), K, B.data(), K, C0.data(), N, acc);
            simd::avx2::gemm_nt(M, N, K, A.data(), K, B.data(), K, C1.data(), N, acc);
            expect_close(C0, C1, K);
        }
    }
}

TEST_F(SimdEquivalence, GemmWithLeadingDimensions) {
    RandomSource rng(4, "ld");
    const int M = 9, N = 21, K = 11, lda = 15, ldb = 30, ldc = 25;
    const auto A = rand_vec(rng, static_cast<std::size_t>(M) * lda);
    const auto B = rand_vec(rng, static_cast<std::size_t>(K) * ldb);
    auto C0 = rand_vec(rng, static_cast<std::size_t>(M) * ldc);
    auto C1 = C0;
    simd::scalar::gemm_nn(M, N, K, A.data(), lda, B.data(), ldb, C0.data(), ldc, false);
    simd::avx2::gemm_nn(M, N, K, A.data(), lda, B.data(), ldb, C1.data(), ldc, false);
    expect_close(C0, C1, K);
}

TEST_F(SimdEquivalence, ElementwiseKernelsExact) {
    RandomSource rng(5, "ew");
    for (std::size_t n : {1u, 7u, 8u, 9u, 31u, 1000u}) {
        const auto x = rand_vec(rng, n);
        auto y0 = rand_vec(rng, n);
        auto y1 = y0;
        simd::scalar::max_inplace(y0.data(), x.data(), n);
        simd::avx2::max_inplace(y1.data(), x.data(), n);
        EXPECT_EQ(y0, y1);
        simd::scalar::relu(x.data(), y0.data(), n);
        simd::avx2::relu(x.data(), y1.data(), n);
        EXPECT_EQ(y0, y1);
        auto z0 = rand_vec(rng, n);
        auto z1 = z0;
        simd::scalar::axpy(0.37f, x.data(), z0.data(), n);
        simd::avx2::axpy(0.37f, x.data(), z1.data(), n);
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(z0[i], z1[i], 1e-6f * (1 + std::abs(z0[i])));
    }
}

TEST(SimdDispatch, ForcedScalarMatchesReference) {
    RandomSource rng(6, "disp");
    const int M = 5, N = 19, K = 7;
    const auto A = rand_vec(rng, static_cast<std::size_t>(M) * K);
    const auto B = rand_vec(rng, static_cast<std::size_t>(K) * N);
    std::vector<float> C0(static_cast<std::size_t>(M) * N), C1(C0.size());
    const simd::Isa before = simd::active_isa();
    simd::force_isa(simd::Isa::Scalar);
    EXPECT_EQ(simd::active_isa(), simd::Isa::Scalar);
    simd::gemm_nn(M, N, K, A.data(), K, B.data(), N, C0.data(), N, false);
    simd::scalar::gemm_nn(M, N, K, A.data(), K, B.data(), N, C1.data(), N, false);
    EXPECT_EQ(C0, C1);
    simd::force_isa(before);
}

TEST(SimdDispatch, DoubleAlwaysReference) {
    RandomSource rng(7, "dbl");
    const int M = 4, N = 9, K = 6;
    std::vector<double> A(static_cast<std::size_t>(M) * K), B(static_cast<std::size_t>(K) * N);
    for (double& v : A) v = rng.normal();
    for (double& v : B) v = rng.normal();
    std::vector<double> C0(static_cast<std::size_t>(M) * N), C1(C0.size());
    simd::gemm_nn(M, N, K, A.data(), K, B.data(), N, C0.data(), N, false);
    // independent triple loop
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            double s = 0;
            for (int k = 0; k < K; ++k) s += A[static_cast<std::size_t>(i * K + k)] * B[static_cast<std::size_t>(k * N + j)];
            C1[static_cast<std::size_t>(i * N + j)] = s;
        }
    for (std::size_t i = 0; i < C0.size(); ++i) EXPECT_NEAR(C0[i], C1[i], 1e-12);
}
