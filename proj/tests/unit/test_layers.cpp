#include <gtest/gtest.h>

#include <cmath>

#include "c3det/core/random.hpp"
#include "c3det/gradcheck.hpp"
#include "c3det/nn/layers.hpp"
#include "c3det/nn/optim.hpp"

using namespace c3det;
using namespace c3det::nn;

namespace {

template <class T>
Tensor<T> random_tensor(RandomSource& rng, int c, int h, int w) {
    Tensor<T> t(c, h, w);
    for (auto& v : t.v) v = static_cast<T>(rng.normal());
    return t;
}

// Direct convolution by nested loops.
Tensor<double> conv_oracle(const Tensor<double>& x, Conv2d<double>& conv) {
    const int k = conv.kernel(), s = conv.stride(), pad = k / 2;
    const int oh = Conv2d<double>::out_size(x.h, s), ow = Conv2d<double>::out_size(x.w, s);
    Tensor<double> y(conv.out_channels(), oh, ow);
    const auto& wv = conv.weight().value;
    for (int o = 0; o < conv.out_channels(); ++o)
        for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx) {
                double acc = conv.bias().value[static_cast<std::size_t>(o)];
                for (int c = 0; c < x.c; ++c)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = yy * s + ky - pad, ix = xx * s + kx - pad;
                            if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                            acc += wv[((static_cast<std::size_t>(o) * x.c + c) * k + ky) * k + kx] * x.at(c, iy, ix);
                        }
                y.at(o, yy, xx) = acc;
            }
    return y;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
    return s;
}

}  // namespace

class ConvShapes : public ::testing::TestWithParam<std::tuple<int, int>> {};

TEST_P(ConvShapes, ForwardMatchesLoopOracle) {
    const auto [k, s] = GetParam();
    RandomSource rng(static_cast<std::uint64_t>(k * 10 + s), "conv");
    for (auto [h, w] : {std::pair{7, 9}, std::pair{8, 8}, std::pair{1, 5}}) {
        Conv2d<double> conv("c", 3, 4, k, s);
        conv.init(rng);
        for (auto& b : conv.bias().value) b = rng.normal();
        const auto x = random_tensor<double>(rng, 3, h, w);
        const auto y = conv.forward(x);
        const auto ref = conv_oracle(x, conv);
        ASSERT_TRUE(y.same_shape(ref));
        for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y.v[i], ref.v[i], 1e-12);
    }
}

TEST_P(ConvShapes, BackwardMatchesFiniteDifferences) {
    const auto [k, s] = GetParam();
    RandomSource rng(static_cast<std::uint64_t>(k * 10 + s + 100), "convb");
    Conv2d<double> conv("c", 2, 3, k, s);
    conv.init(rng);
    auto x = random_tensor<double>(rng, 2, 6, 5);
    const Tensor<double> r = random_tensor<double>(rng, 3, Conv2d<double>::out_size(6, s), Conv2d<double>::out_size(5, s));
    auto loss = [&] { return dot(conv.forward(x), r); };
    loss();
    const auto dx = conv.backward(r, true);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (std::size_t i = 0; i < x.size(); ++i) {
        coords.push_back(&x.v[i]);
        analytic.push_back(dx.v[i]);
    }
    for (std::size_t i = 0; i < conv.weight().size(); ++i) {
        coords.push_back(&conv.weight().value[i]);
        analytic.push_back(conv.weight().grad[i]);
    }
    for (std::size_t i = 0; i < conv.bias().size(); ++i) {
        coords.push_back(&conv.bias().value[i]);
        analytic.push_back(conv.bias().grad[i]);
    }
    const auto res = compare_gradients("conv", loss, coords, analytic);
    EXPECT_TRUE(res.passed) << res.max_rel_error;
}

INSTANTIATE_TEST_SUITE_P(Layers, ConvShapes,
                         ::testing::Values(std::tuple{1, 1}, std::tuple{3, 1}, std::tuple{3, 2}));

TEST(Conv, OutSize) {
    EXPECT_EQ(Conv2d<float>::out_size(256, 2), 128);
    EXPECT_EQ(Conv2d<float>::out_size(7, 2), 4);
    EXPECT_EQ(Conv2d<float>::out_size(7, 1), 7);
}

TEST(Conv, FloatMatchesDouble) {
    RandomSource rng(5, "fd");
    Conv2d<double> cd("c", 5, 7, 3, 2);
    cd.init(rng);
    Conv2d<float> cf("c", 5, 7, 3, 2);
    for (std::size_t i = 0; i < cd.weight().size(); ++i) cf.weight().value[i] = static_cast<float>(cd.weight().value[i]);
    const auto x = random_tensor<double>(rng, 5, 13, 11);
    const auto yd = cd.forward(x);
    const auto yf = cf.forward(x.cast<float>());
    for (std::size_t i = 0; i < yd.size(); ++i) EXPECT_NEAR(yf.v[i], yd.v[i], 1e-4);
}

TEST(Im2col, Col2imIsAdjoint) {
    RandomSource rng(6, "adj");
    for (int s : {1, 2}) {
        const int c = 3, h = 7, w = 6;
        const int oh = (h + s - 1) / s, ow = (w + s - 1) / s;
        std::vector<double> x(static_cast<std::size_t>(c) * h * w), col(static_cast<std::size_t>(c) * 9 * oh * ow);
        for (auto& v : x) v = rng.normal();
        for (auto& v : col) v = rng.normal();
        std::vector<double> ax(col.size()), aty(x.size(), 0.0);
        im2col3x3(x.data(), c, h, w, s, ax.data());
        col2im3x3(col.data(), c, h, w, s, aty.data());
        double lhs = 0, rhs = 0;
        for (std::size_t i = 0; i < col.size(); ++i) lhs += ax[i] * col[i];
        for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * aty[i];
        EXPECT_NEAR(lhs, rhs, 1e-9 * (1 + std::abs(lhs)));
    }
}

TEST(Relu, ForwardBackward) {
    Tensor<double> x(1, 1, 4);
    x.v = {-1.0, 0.5, 0.0, 2.0};
    ReLU<double> r;
    const auto y = r.forward(x);
    EXPECT_EQ(y.v, (std::vector<double>{0.0, 0.5, 0.0, 2.0}));
    Tensor<double> dy(1, 1, 4, 1.0);
    EXPECT_EQ(r.backward(dy).v, (std::vector<double>{0.0, 1.0, 0.0, 1.0}));
}

TEST(ChannelNorm, StandardizesAndBackpropagates) {
    RandomSource rng(7, "cn");
    ChannelNorm<double> n("n", 3);
    auto x = random_tensor<double>(rng, 3, 5, 4);
    for (auto& v : x.v) v = v * 3 + 2;
    const auto y = n.forward(x);
    for (int c = 0; c < 3; ++c) {
        double m = 0, q = 0;
        for (std::size_t i = 0; i < y.plane(); ++i) m += y.channel(c)[i];
        m /= static_cast<double>(y.plane());
        for (std::size_t i = 0; i < y.plane(); ++i) q += (y.channel(c)[i] - m) * (y.channel(c)[i] - m);
        EXPECT_NEAR(m, 0.0, 1e-9);
        EXPECT_NEAR(q / static_cast<double>(y.plane()), 1.0, 1e-3);
    }
    auto params = n.params();
    for (auto* p : params)
        for (auto& v : p->value) v += rng.uniform(-0.5, 0.5);
    const auto r = random_tensor<double>(rng, 3, 5, 4);
    auto loss = [&] { return dot(n.forward(x), r); };
    loss();
    const auto dx = n.backward(r);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (std::size_t i = 0; i < x.size(); ++i) {
        coords.push_back(&x.v[i]);
        analytic.push_back(dx.v[i]);
    }
    for (auto* p : params)
        for (std::size_t i = 0; i < p->size(); ++i) {
            coords.push_back(&p->value[i]);
            analytic.push_back(p->grad[i]);
        }
    const auto res = compare_gradients("norm", loss, coords, analytic);
    EXPECT_TRUE(res.passed) << res.max_rel_error;
}

TEST(Optimizer, SgdMomentumByHand) {
    Param<float> p("w", {1});
    p.value = {1.0f};
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Sgd;
    cfg.weight_decay = 0;
    cfg.grad_clip = 0;
    Optimizer opt({&p}, cfg);
    p.grad = {2.0f};
    opt.step(0.1);
    EXPECT_NEAR(p.value[0], 1.0 - 0.1 * 2.0, 1e-6);
    EXPECT_EQ(p.grad[0], 0.0f);
    p.grad = {2.0f};
    opt.step(0.1);
    EXPECT_NEAR(p.value[0], 0.8 - 0.1 * (0.9 * 2.0 + 2.0), 1e-6);
    EXPECT_EQ(opt.steps(), 2);
}

TEST(Optimizer, AdamFirstStepIsLrTimesSign) {
    Param<float> p("w", {2});
    p.value = {0.0f, 0.0f};
    OptimizerConfig cfg;
    cfg.weight_decay = 0;
    cfg.grad_clip = 0;
    Optimizer opt({&p}, cfg);
    p.grad = {3.0f, -0.01f};
    opt.step(0.01);
    EXPECT_NEAR(p.value[0], -0.01, 1e-6);
    EXPECT_NEAR(p.value[1], 0.01, 1e-5);
}

TEST(Optimizer, ClipsGlobalNorm) {
    Param<float> p("w", {2});
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::Sgd;
    cfg.weight_decay = 0;
    cfg.grad_clip = 1.0;
    Optimizer opt({&p}, cfg);
    p.grad = {3.0f, 4.0f};
    EXPECT_NEAR(opt.step(1.0), 5.0, 1e-6);
    EXPECT_NEAR(p.value[0], -0.6, 1e-6);
    EXPECT_NEAR(p.value[1], -0.8, 1e-6);
}

TEST(Optimizer, ParseNames) {
    EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::Sgd);
    EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::Adam);
    EXPECT_THROW(parse_optimizer("rmsprop"), std::invalid_argument);
}
