#include <gtest/gtest.h>

#include "testing_util.hpp"
#include "trd/nn.hpp"
#include "trd/ops.hpp"

using namespace trd;
using test::grad_check;
using test::random_tensor;

namespace {

// independent direct convolution, no im2col
Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), k = w.dim(2);
    const int Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
    Tensor y({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int ho = 0; ho < Ho; ++ho)
                for (int wo = 0; wo < Wo; ++wo) {
                    double s = b[co];
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int di = 0; di < k; ++di)
                            for (int dj = 0; dj < k; ++dj) {
                                const int hi = ho * stride + di - pad, wi = wo * stride + dj - pad;
                                if (hi < 0 || hi >= H || wi < 0 || wi >= W) continue;
                                s += x.at(n, ci, hi, wi) * w.at(co, ci, di, dj);
                            }
                    y.at(n, co, ho, wo) = s;
                }
    return y;
}

}  // namespace

TEST(Ops, Conv2dMatchesNaiveOracle) {
    Rng rng(7);
    Var x = make_var(random_tensor({2, 3, 7, 7}, rng), false);
    Var w = make_var(random_tensor({4, 3, 3, 3}, rng), false);
    Var b = make_var(random_tensor({4}, rng), false);
    for (int stride : {1, 2}) {
        Var y = ops::conv2d(x, w, b, stride, 1);
        Tensor ref = naive_conv2d(x->value, w->value, b->value, stride, 1);
        ASSERT_TRUE(y->value.same_shape(ref));
        for (std::int64_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y->value[i], ref[i], 1e-12);
    }
}

TEST(Ops, Conv2dGradient) {
    Rng rng(11);
    Var x = make_var(random_tensor({2, 3, 6, 6}, rng), true);
    Var w = make_var(random_tensor({4, 3, 3, 3}, rng), true);
    Var b = make_var(random_tensor({4}, rng), true);
    auto loss = [&] { return ops::mean_all(ops::conv2d(x, w, b, 2, 1)); };
    EXPECT_LT(grad_check(loss, {x, w, b}), 1e-6);
}

TEST(Ops, ConvTranspose2dShapeAndGradient) {
    Rng rng(13);
    Var x = make_var(random_tensor({2, 4, 3, 3}, rng), true);
    Var w = make_var(random_tensor({4, 3, 2, 2}, rng), true);
    Var b = make_var(random_tensor({3}, rng), true);
    Var y = ops::conv_transpose2d(x, w, b, 2, 0);
    EXPECT_EQ(y->value.shape(), (Shape{2, 3, 6, 6}));
    auto loss = [&] { return ops::mean_all(ops::conv_transpose2d(x, w, b, 2, 0)); };
    EXPECT_LT(grad_check(loss, {x, w, b}), 1e-6);
}

TEST(Ops, ConvTransposeIsAdjointOfConv) {
    // <conv(x), y> == <x, convT(y)> with zero bias and shared weight storage
    // (conv weight [out, in, k, k] read by convT as [in, out, k, k] once the
    // roles swap); holds only for geometries without output-padding slack
    Rng rng(17);
    struct Geometry { int k, pad; } geos[] = {{2, 0}, {4, 1}};
    for (auto geo : geos) {
        Var w = make_var(random_tensor({5, 3, geo.k, geo.k}, rng), false);
        Var zb5 = make_var(Tensor({5}), false);
        Var zb3 = make_var(Tensor({3}), false);
        Var x = make_var(random_tensor({1, 3, 8, 8}, rng), false);
        Var y = make_var(random_tensor({1, 5, 4, 4}, rng), false);
        Var cx = ops::conv2d(x, w, zb5, 2, geo.pad);
        Var ty = ops::conv_transpose2d(y, w, zb3, 2, geo.pad);
        ASSERT_EQ(cx->value.shape(), y->value.shape());
        ASSERT_EQ(ty->value.shape(), x->value.shape());
        double lhs = 0.0, rhs = 0.0;
        for (std::int64_t i = 0; i < cx->value.size(); ++i) lhs += cx->value[i] * y->value[i];
        for (std::int64_t i = 0; i < ty->value.size(); ++i) rhs += ty->value[i] * x->value[i];
        EXPECT_NEAR(lhs, rhs, 1e-9);
    }
}

TEST(Ops, GroupNormNormalizesAndGradient) {
    Rng rng(19);
    Var x = make_var(random_tensor({2, 4, 5, 5}, rng, -2.0, 3.0), true);
    Var gamma = make_var(Tensor({4}, 1.0), true);
    Var beta = make_var(Tensor({4}), true);

    Var y = ops::group_norm(x, gamma, beta, 2, 1e-5);
    // per (sample, group) the output has ~zero mean and ~unit variance
    const std::int64_t gsize = 2 * 5 * 5;
    for (int n = 0; n < 2; ++n)
        for (int g = 0; g < 2; ++g) {
            double mean = 0.0, var = 0.0;
            for (int cc = 0; cc < 2; ++cc)
                for (int h = 0; h < 5; ++h)
                    for (int w = 0; w < 5; ++w) mean += y->value.at(n, g * 2 + cc, h, w);
            mean /= static_cast<double>(gsize);
            for (int cc = 0; cc < 2; ++cc)
                for (int h = 0; h < 5; ++h)
                    for (int w = 0; w < 5; ++w) {
                        const double d = y->value.at(n, g * 2 + cc, h, w) - mean;
                        var += d * d;
                    }
            var /= static_cast<double>(gsize);
            EXPECT_NEAR(mean, 0.0, 1e-10);
            EXPECT_NEAR(var, 1.0, 1e-3);
        }

    gamma->value[1] = 1.3;
    beta->value[2] = -0.4;
    auto loss = [&] {
        // square the output so the gradient w.r.t. gamma/beta is generic
        Var gn = ops::group_norm(x, gamma, beta, 2, 1e-5);
        Var sq = ops::mean_all(ops::relu(ops::affine(gn, 1.0, 0.3)));
        return sq;
    };
    EXPECT_LT(grad_check(loss, {x, gamma, beta}), 1e-4);
}

TEST(Ops, ElementwiseGradients) {
    Rng rng(23);
    Var a = make_var(random_tensor({2, 3, 4, 4}, rng), true);
    Var b = make_var(random_tensor({2, 3, 4, 4}, rng), true);
    auto loss = [&] {
        Var s = ops::add(ops::relu(a), ops::affine(b, -1.7, 0.2));
        return ops::mean_all(ops::concat_channels({s, a}));
    };
    EXPECT_LT(grad_check(loss, {a, b}), 1e-5);
}

TEST(Ops, CosineMapValues) {
    // two locations: identical vectors -> 1, orthogonal -> 0
    Tensor a({1, 2, 1, 2});
    Tensor b({1, 2, 1, 2});
    // location (0,0): a=(1,1), b=(1,1); location (0,1): a=(1,0), b=(0,1)
    a.at(0, 0, 0, 0) = 1;
    a.at(0, 1, 0, 0) = 1;
    b.at(0, 0, 0, 0) = 1;
    b.at(0, 1, 0, 0) = 1;
    a.at(0, 0, 0, 1) = 1;
    b.at(0, 1, 0, 1) = 1;
    Tensor cos = ops::cosine_map_values(a, b);
    EXPECT_NEAR(cos.at(0, 0, 0, 0), 1.0, 1e-12);
    EXPECT_NEAR(cos.at(0, 0, 0, 1), 0.0, 1e-12);
}

TEST(Ops, CosineMapZeroNormGuard) {
    Tensor a({1, 2, 1, 1});  // zero vector
    Tensor b({1, 2, 1, 1});
    b.at(0, 0, 0, 0) = 3.0;
    Tensor cos = ops::cosine_map_values(a, b);
    EXPECT_EQ(cos.at(0, 0, 0, 0), 0.0);
}

TEST(Ops, CosineMapGradient) {
    Rng rng(29);
    Var a = make_var(random_tensor({1, 3, 3, 3}, rng, 0.2, 1.5), true);
    Var b = make_var(random_tensor({1, 3, 3, 3}, rng, 0.2, 1.5), true);
    auto loss = [&] { return ops::mean_all(ops::cosine_map(a, b)); };
    EXPECT_LT(grad_check(loss, {a, b}), 1e-5);
}

TEST(Ops, SoftmaxBlendGradient) {
    Rng rng(31);
    Var a = make_var(random_tensor({1, 2, 3, 3}, rng), true);
    Var b = make_var(random_tensor({1, 2, 3, 3}, rng), true);
    Var w1 = make_var(Tensor::scalar(0.7), true);
    Var w2 = make_var(Tensor::scalar(-0.3), true);
    auto loss = [&] { return ops::mean_all(ops::relu(ops::softmax_blend(a, b, w1, w2))); };
    EXPECT_LT(grad_check(loss, {a, b, w1, w2}), 1e-5);
}

TEST(Ops, DetachBlocksGradient) {
    Rng rng(37);
    Var a = make_var(random_tensor({1, 2, 2, 2}, rng), true);
    Var through = ops::mean_all(ops::affine(a, 2.0, 0.0));
    Var blocked = ops::mean_all(ops::affine(detach(a), 2.0, 0.0));
    Var loss = ops::add_scalars({through, blocked});
    a->ensure_grad();
    a->zero_grad();
    backward(loss);
    // only the un-detached path contributes: d(mean(2a))/da = 2/n
    for (std::int64_t i = 0; i < a->grad.size(); ++i)
        EXPECT_NEAR(a->grad[i], 2.0 / static_cast<double>(a->value.size()), 1e-12);
}

TEST(Ops, BilinearResizeIdentityAndValues) {
    Tensor m({2, 2});
    m.at(0, 0) = 1;
    m.at(0, 1) = 2;
    m.at(1, 0) = 3;
    m.at(1, 1) = 4;
    Tensor same = ops::bilinear_resize_hw(m, 2, 2);
    for (std::int64_t i = 0; i < m.size(); ++i) EXPECT_DOUBLE_EQ(same[i], m[i]);
    Tensor up = ops::bilinear_resize_hw(m, 4, 4);
    // center of the upsampled grid interpolates the 4 corners evenly
    EXPECT_NEAR(up.at(0, 0), 1.0, 1e-12);   // clamped corner
    EXPECT_NEAR(up.at(3, 3), 4.0, 1e-12);
    EXPECT_NEAR(0.25 * (up.at(1, 1) + up.at(1, 2) + up.at(2, 1) + up.at(2, 2)), 2.5, 1e-9);
}

TEST(Ops, GaussianBlurConstantAndImpulse) {
    Tensor c({9, 9}, 3.25);
    Tensor cb = ops::gaussian_blur_hw(c, 1.0);
    for (std::int64_t i = 0; i < cb.size(); ++i) EXPECT_NEAR(cb[i], 3.25, 1e-9);

    Tensor imp({21, 21});
    imp.at(10, 10) = 1.0;
    Tensor blurred = ops::gaussian_blur_hw(imp, 1.5);
    EXPECT_NEAR(blurred.sum(), 1.0, 1e-9);  // centered impulse mass preserved

    // direct 2-d convolution oracle with the same truncated kernel
    const double sigma = 1.5;
    const int R = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> k(static_cast<size_t>(2 * R + 1));
    double norm = 0.0;
    for (int i = -R; i <= R; ++i) {
        k[static_cast<size_t>(i + R)] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += k[static_cast<size_t>(i + R)];
    }
    for (double& v : k) v /= norm;
    for (int y = 4; y <= 16; ++y)
        for (int x = 4; x <= 16; ++x) {
            const int dy = y - 10, dx = x - 10;
            const double expected = (std::abs(dy) <= R && std::abs(dx) <= R)
                                        ? k[static_cast<size_t>(dy + R)] * k[static_cast<size_t>(dx + R)]
                                        : 0.0;
            EXPECT_NEAR(blurred.at(y, x), expected, 1e-12);
        }
}

TEST(Nn, ResidualBlockShapesAndGradient) {
    Rng init(41);
    nn::ResidualBlock block(3, 5, init);
    Rng rng(43);
    Var x = make_var(random_tensor({2, 3, 4, 4}, rng), true);
    Var y = block.forward(x);
    EXPECT_EQ(y->value.shape(), (Shape{2, 5, 4, 4}));
    std::vector<Var> checked = block.params();
    checked.push_back(x);
    auto loss = [&] { return ops::mean_all(block.forward(x)); };
    EXPECT_LT(grad_check(loss, checked), 1e-4);
}
