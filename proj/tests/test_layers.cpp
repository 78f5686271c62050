#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mclkit/gradcheck.hpp"
#include "mclkit/stack.hpp"

using namespace mclkit;

namespace {

Tensor<double> random_tensor(const Shape& shape, Rng& rng) {
    Tensor<double> t(shape);
    for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

struct LayerCase {
    std::string name;
    std::function<LayerStack<double>()> build;
    double tolerance;
};

// Each stack ends in a dense/projection layer so the l1 target differs from the output.
std::vector<LayerCase> cases() {
    return {
        {"dense",
         [] {
             LayerStack<double> s({6});
             s.add<Dense<double>>(6, 4);
             return s;
         },
         1e-6},
        {"mode_projection",
         [] {
             LayerStack<double> s({4, 3, 2});
             s.add<ModeProjection<double>>(Shape{4, 3, 2}, Shape{2, 3, 1});
             return s;
         },
         1e-6},
        {"conv2d",
         [] {
             LayerStack<double> s({5, 4, 2});
             s.add<Conv2d<double>>(2, 3);
             return s;
         },
         1e-4},
        {"relu",
         [] {
             LayerStack<double> s({3, 4, 2});
             s.add<Relu<double>>();
             return s;
         },
         1e-4},
        {"maxpool2",
         [] {
             LayerStack<double> s({4, 6, 2});
             s.add<MaxPool2<double>>();
             return s;
         },
         1e-4},
        {"upsample2",
         [] {
             LayerStack<double> s({2, 3, 2});
             s.add<Upsample2<double>>();
             return s;
         },
         1e-4},
        {"global_avg_pool",
         [] {
             LayerStack<double> s({3, 3, 4});
             s.add<GlobalAvgPool<double>>();
             return s;
         },
         1e-4},
        {"flatten",
         [] {
             LayerStack<double> s({2, 3, 2});
             s.add<Flatten<double>>();
             return s;
         },
         1e-4},
    };
}

}  // namespace

class LayerGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(LayerGradient, MatchesCentralDifferencesOverSeeds) {
    const LayerCase c = cases()[GetParam()];
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        LayerStack<double> s = c.build();
        s.initialize(rng);
        const auto x = random_tensor(s.input_shape(), rng);
        const auto target = random_tensor(s.output_shape(), rng);
        const double err = grad_check(s, LossKind::l1, x, {target, 0});
        EXPECT_LT(err, c.tolerance) << c.name << " seed " << seed;
    }
}

INSTANTIATE_TEST_SUITE_P(AllLayers, LayerGradient, ::testing::Range<std::size_t>(0, 8),
                         [](const auto& info) { return cases()[info.param].name; });

TEST(LayerStack, BackwardWithoutForwardThrows) {
    LayerStack<double> s({3});
    s.add<Dense<double>>(3, 2);
    EXPECT_THROW(s.backward(Tensor<double>({2})), StateError);
    s.forward(Tensor<double>({3}), false);
    EXPECT_THROW(s.backward(Tensor<double>({2})), StateError);
}

TEST(LayerStack, LayerBackwardWithoutCacheThrows) {
    Dense<double> d(3, 2);
    EXPECT_THROW(d.backward(Tensor<double>({2})), StateError);
    d.forward(Tensor<double>({3}), true);
    EXPECT_TRUE(d.has_cache());
    d.backward(Tensor<double>({2}));
    EXPECT_FALSE(d.has_cache());
    EXPECT_THROW(d.backward(Tensor<double>({2})), StateError);
}

TEST(LayerStack, ShapeErrorNamesLayer) {
    LayerStack<double> s({4, 4, 3});
    s.add<Conv2d<double>>(3, 5);
    try {
        s.add<Conv2d<double>>(3, 2);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1 (conv2d)"), std::string::npos);
    }
    EXPECT_THROW(s.infer(Tensor<double>({4, 4, 2})), ShapeError);
}

TEST(LayerStack, CopyIsDeep) {
    Rng rng(1);
    LayerStack<double> a({3});
    a.add<Dense<double>>(3, 2);
    a.initialize(rng);
    LayerStack<double> b = a;
    b.params()[0]->value[0] += 1.0;
    EXPECT_NE(a.params()[0]->value[0], b.params()[0]->value[0]);
    b.copy_parameters_from(a);
    EXPECT_EQ(a.params()[0]->value, b.params()[0]->value);
}

TEST(LayerStack, GlorotBoundsAndZeroBias) {
    Rng rng(2);
    LayerStack<double> s({8, 8, 3});
    s.add<Conv2d<double>>(3, 4);
    s.initialize(rng);
    const auto ps = s.params();
    const double limit = std::sqrt(6.0 / (9.0 * 3 + 9.0 * 4));
    for (double v : ps[0]->value.values()) EXPECT_LE(std::abs(v), limit);
    for (double v : ps[1]->value.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, SamePaddingMatchesDirectSum) {
    Rng rng(4);
    Conv2d<double> conv(2, 3);
    conv.initialize(rng);
    const auto x = random_tensor({4, 5, 2}, rng);
    const auto y = conv.infer(x);
    const auto w = conv.const_params()[0]->value;
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 5; ++c)
            for (std::size_t o = 0; o < 3; ++o) {
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int rr = static_cast<int>(r) + dy, cc = static_cast<int>(c) + dx;
                        if (rr < 0 || rr >= 4 || cc < 0 || cc >= 5) continue;
                        for (std::size_t i = 0; i < 2; ++i)
                            acc += w.at({static_cast<std::size_t>(dy + 1), static_cast<std::size_t>(dx + 1), i, o}) *
                                   x.at({static_cast<std::size_t>(rr), static_cast<std::size_t>(cc), i});
                    }
                EXPECT_NEAR(y.at({r, c, o}), acc, 1e-12);
            }
}

TEST(MaxPool2, DropsOddTrailingRowAndRejectsTinyInput) {
    MaxPool2<double> p;
    EXPECT_EQ(p.output_shape({3, 5, 2}), (Shape{1, 2, 2}));
    EXPECT_THROW(p.output_shape({1, 4, 1}), ShapeError);
}

TEST(MaxPool2, FirstMaximumWinsTies) {
    MaxPool2<double> p;
    Tensor<double> x({2, 2, 1}, {1.0, 1.0, 1.0, 1.0});
    p.forward(x, true);
    const auto g = p.backward(Tensor<double>({1, 1, 1}, {1.0}));
    EXPECT_EQ(g.values(), (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
}

TEST(ModeProjection, InferIsMultiModeProduct) {
    Rng rng(5);
    ModeProjection<double> m({4, 3, 2}, {2, 2, 1});
    m.initialize(rng);
    const auto x = random_tensor({4, 3, 2}, rng);
    EXPECT_EQ(m.infer(x), multi_mode_product(x, m.factor_matrices()));
}
