#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mclkit/gradcheck.hpp"
#include "mclkit/losses.hpp"
#include "mclkit/rng.hpp"

using namespace mclkit;

namespace {

Tensor<double> random_logits(std::size_t n, Rng& rng, double scale = 2.0) {
    Tensor<double> t({n});
    for (auto& v : t.values()) v = rng.uniform(-scale, scale);
    return t;
}

LayerStack<double> head(std::size_t in, std::size_t out, Rng& rng) {
    LayerStack<double> s({in});
    s.add<Dense<double>>(in, out);
    s.initialize(rng);
    return s;
}

}  // namespace

TEST(CrossEntropy, MatchesDefinition) {
    Rng rng(1);
    const auto z = random_logits(5, rng);
    double denom = 0.0;
    for (double v : z.values()) denom += std::exp(v);
    const auto r = cross_entropy(z, 3);
    EXPECT_NEAR(r.loss, -std::log(std::exp(z[3]) / denom), 1e-12);
}

TEST(CrossEntropy, StableForHugeLogits) {
    Tensor<double> z({3}, {1000.0, 0.0, -1000.0});
    const auto r = cross_entropy(z, 0);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_NEAR(r.loss, 0.0, 1e-12);
    EXPECT_THROW(cross_entropy(z, 3), ConfigError);
}

TEST(CrossEntropy, GradientOverSeeds) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        auto s = head(6, 4, rng);
        Tensor<double> x({6});
        for (auto& v : x.values()) v = rng.uniform(-1, 1);
        EXPECT_LT(grad_check(s, LossKind::cross_entropy, x, {Tensor<double>({4}), seed % 4}), 1e-4) << seed;
    }
}

TEST(SymmetricKl, ExactlySymmetricAndZeroOnSelf) {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        const auto a = random_logits(6, rng, 8.0);
        const auto b = random_logits(6, rng, 8.0);
        EXPECT_EQ(symmetric_kl(a, b).loss, symmetric_kl(b, a).loss);
        EXPECT_GE(symmetric_kl(a, b).loss, 0.0);
        EXPECT_EQ(symmetric_kl(a, a).loss, 0.0);
    }
}

TEST(SymmetricKl, MatchesTwoDirectionalKl) {
    Rng rng(3);
    const auto a = random_logits(4, rng);
    const auto b = random_logits(4, rng);
    const auto p = softmax(a), q = softmax(b);
    double ref = 0.0;
    for (std::size_t i = 0; i < 4; ++i) ref += p[i] * std::log(p[i] / q[i]) + q[i] * std::log(q[i] / p[i]);
    EXPECT_NEAR(symmetric_kl(a, b).loss, ref, 1e-12);
}

TEST(SymmetricKl, FiniteUnderSaturation) {
    Tensor<double> a({3}, {500.0, 0.0, 0.0});
    Tensor<double> b({3}, {0.0, 0.0, 500.0});
    const auto r = symmetric_kl(a, b);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_TRUE(r.grad_a.all_finite());
    EXPECT_TRUE(r.grad_b.all_finite());
}

TEST(SymmetricKl, GradientOverSeeds) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        auto s = head(5, 4, rng);
        Tensor<double> x({5});
        for (auto& v : x.values()) v = rng.uniform(-1, 1);
        EXPECT_LT(grad_check(s, LossKind::symmetric_kl, x, {random_logits(4, rng), 0}), 1e-4) << seed;
    }
}

TEST(SymmetricKl, SecondArgumentGradient) {
    Rng rng(7);
    const auto a = random_logits(5, rng);
    auto b = random_logits(5, rng);
    const auto r = symmetric_kl(a, b);
    for (std::size_t i = 0; i < 5; ++i) {
        const double saved = b[i];
        b[i] = saved + 1e-6;
        const double up = symmetric_kl(a, b).loss;
        b[i] = saved - 1e-6;
        const double down = symmetric_kl(a, b).loss;
        b[i] = saved;
        EXPECT_NEAR(r.grad_b[i], (up - down) / 2e-6, 1e-7);
    }
}

TEST(L1, MeanAndSignConvention) {
    Tensor<double> a({4}, {1.0, 2.0, 3.0, 4.0});
    Tensor<double> b({4}, {1.0, 0.0, 5.0, 4.5});
    const auto r = l1_loss(a, b);
    EXPECT_DOUBLE_EQ(r.loss, (0.0 + 2.0 + 2.0 + 0.5) / 4.0);
    EXPECT_EQ(r.grad_a[0], 0.0);
    EXPECT_EQ(r.grad_a[1], 0.25);
    EXPECT_EQ(r.grad_a[2], -0.25);
    EXPECT_EQ(r.grad_b[1], -0.25);
    EXPECT_THROW(l1_loss(a, Tensor<double>({3})), ShapeError);
}

TEST(L1, GradientOverSeeds) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        auto s = head(5, 3, rng);
        Tensor<double> x({5});
        for (auto& v : x.values()) v = rng.uniform(-1, 1);
        EXPECT_LT(grad_check(s, LossKind::l1, x, {random_logits(3, rng), 0}), 1e-4) << seed;
    }
}
