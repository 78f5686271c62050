#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "mclkit/losses.hpp"
#include "mclkit/metrics.hpp"
#include "mclkit/trainer.hpp"

using namespace mclkit;

namespace {

// Two Gaussian blobs in the plane, centred at (+-1.5, +-1.5).
SampleSet<double> blobs(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    SampleSet<double> s{{2}, 2, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
        const int y = int(i % 2);
        const double c = y ? 1.5 : -1.5;
        s.add(Tensor<double>({2}, {c + 0.5 * rng.normal(), c + 0.5 * rng.normal()}), y);
    }
    return s;
}

LayerStack<double> mlp(std::uint64_t seed) {
    LayerStack<double> s({2});
    s.add<Dense<double>>(2, 8);
    s.add<Relu<double>>();
    s.add<Dense<double>>(8, 2);
    Rng rng(seed);
    s.initialize(rng);
    return s;
}

SampleObjective<double> ce_objective() {
    return [](std::span<LayerStack<double>* const> st, const Tensor<double>& x, int y) {
        const auto logits = st[0]->forward(x, true);
        auto r = cross_entropy(logits, std::size_t(y));
        st[0]->backward(r.grad);
        return r.loss;
    };
}

TrainConfig quick(std::size_t epochs) {
    TrainConfig c;
    c.epochs = epochs;
    c.lr_values = {1e-2};
    c.lr_switch = {};
    c.flip = false;
    c.shift_fraction = 0.0;
    c.batch_size = 16;
    return c;
}

TrainJob<double> job_for(LayerStack<double>& net, const SampleSet<double>& val) {
    TrainJob<double> job;
    job.name = "toy";
    job.stacks = {&net};
    job.trainable = {true};
    job.objective = ce_objective();
    job.validate = [&net, &val] {
        std::vector<const LayerStack<double>*> s{&net};
        return chain_accuracy(std::span<const LayerStack<double>* const>(s), val);
    };
    return job;
}

}  // namespace

TEST(Trainer, LearnsSeparableBlobs) {
    const auto train_set = blobs(1, 200), val = blobs(2, 100);
    auto net = mlp(3);
    auto job = job_for(net, val);
    const auto r = train(job, train_set, quick(20));
    EXPECT_EQ(r.history.size(), 20u);
    EXPECT_GE(r.best_metric, 0.97);
    EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
}

TEST(Trainer, RestoresBestValidationSnapshot) {
    const auto train_set = blobs(1, 200), val = blobs(2, 100);
    auto net = mlp(4);
    auto job = job_for(net, val);
    const auto r = train(job, train_set, quick(15));
    double best = -1;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < r.history.size(); ++i)
        if (r.history[i].val_metric > best) best = r.history[i].val_metric, idx = i;
    EXPECT_EQ(r.best_epoch, idx);
    EXPECT_EQ(r.best_metric, best);
    std::vector<const LayerStack<double>*> s{&net};
    EXPECT_EQ(chain_accuracy(std::span<const LayerStack<double>* const>(s), val), best);
}

TEST(Trainer, FrozenStackIsBitIdentical) {
    // frozen feature stack followed by a trainable head
    const auto train_set = blobs(5, 120), val = blobs(6, 40);
    LayerStack<double> feat({2});
    feat.add<Dense<double>>(2, 4);
    feat.add<Relu<double>>();
    LayerStack<double> head({4});
    head.add<Dense<double>>(4, 2);
    Rng rng(9);
    feat.initialize(rng);
    head.initialize(rng);
    const LayerStack<double> feat_before = feat, head_before = head;

    TrainJob<double> job;
    job.name = "frozen";
    job.stacks = {&feat, &head};
    job.trainable = {false, true};
    job.objective = [](std::span<LayerStack<double>* const> st, const Tensor<double>& x, int y) {
        const auto h = st[0]->forward(x, true);
        auto r = cross_entropy(st[1]->forward(h, true), std::size_t(y));
        st[0]->backward(st[1]->backward(r.grad));
        return r.loss;
    };
    job.validate = [&] {
        std::vector<const LayerStack<double>*> s{&feat, &head};
        return chain_accuracy(std::span<const LayerStack<double>* const>(s), val);
    };
    train(job, train_set, quick(3));
    const auto a = std::as_const(feat).params(), b = feat_before.params();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value.values(), b[i]->value.values());
    const auto c = std::as_const(head).params(), d = head_before.params();
    EXPECT_NE(c[0]->value.values(), d[0]->value.values());
}

TEST(Trainer, DeterministicAcrossThreadCounts) {
    const auto train_set = blobs(7, 90), val = blobs(8, 30);
    std::vector<std::vector<double>> finals;
    for (std::size_t threads : {1u, 2u, 4u}) {
        auto net = mlp(10);
        auto job = job_for(net, val);
        auto cfg = quick(4);
        cfg.threads = threads;
        cfg.flip = false;
        const auto r = train(job, train_set, cfg);
        std::vector<double> flat;
        for (const Param<double>* p : std::as_const(net).params())
            flat.insert(flat.end(), p->value.values().begin(), p->value.values().end());
        for (const auto& rec : r.history) flat.push_back(rec.train_loss);
        finals.push_back(flat);
    }
    EXPECT_EQ(finals[0], finals[1]);
    EXPECT_EQ(finals[0], finals[2]);
}

TEST(Trainer, LearningRateFollowsScheduleAndOffset) {
    const auto train_set = blobs(1, 32), val = blobs(2, 8);
    auto net = mlp(1);
    auto job = job_for(net, val);
    TrainConfig cfg = quick(6);
    cfg.lr_values = {1e-2, 1e-3, 1e-4};
    cfg.lr_switch = {2, 4};
    auto r = train(job, train_set, cfg);
    const double expect[6] = {1e-2, 1e-2, 1e-3, 1e-3, 1e-4, 1e-4};
    for (std::size_t e = 0; e < 6; ++e) {
        EXPECT_EQ(r.history[e].epoch, e);
        EXPECT_DOUBLE_EQ(r.history[e].lr, expect[e]);
    }
    cfg.epochs = 2;
    r = train(job, train_set, cfg, {3, true});
    EXPECT_EQ(r.history[0].epoch, 3u);
    EXPECT_DOUBLE_EQ(r.history[0].lr, 1e-3);
    EXPECT_DOUBLE_EQ(r.history[1].lr, 1e-4);
}

TEST(Trainer, MaxNormHoldsAfterEveryEpoch) {
    const auto train_set = blobs(1, 64), val = blobs(2, 16);
    auto net = mlp(2);
    auto job = job_for(net, val);
    TrainConfig cfg = quick(8);
    cfg.lr_values = {0.5};
    cfg.max_norm = 0.75;
    std::vector<double> norms;
    job.on_epoch_end = [&](const EpochRecord&) {
        norms.push_back(max_constrained_norm(std::span<const Param<double>* const>(std::as_const(net).params())));
    };
    train(job, train_set, cfg, {0, false});
    ASSERT_EQ(norms.size(), 8u);
    for (double n : norms) EXPECT_LE(n, 0.75 + 1e-9);
}

TEST(Trainer, NonFiniteLossRaisesWithDiagnostics) {
    const auto train_set = blobs(1, 16), val = blobs(2, 4);
    auto net = mlp(2);
    auto job = job_for(net, val);
    job.objective = [](std::span<LayerStack<double>* const> st, const Tensor<double>& x, int) {
        st[0]->forward(x, true);
        st[0]->backward(Tensor<double>({2}));
        return std::numeric_limits<double>::quiet_NaN();
    };
    try {
        train(job, train_set, quick(1));
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch 0"), std::string::npos);
        EXPECT_NE(msg.find("max|w|"), std::string::npos);
    }
}

TEST(Trainer, RejectsEmptyDataAndMaskMismatch) {
    const auto val = blobs(2, 4);
    auto net = mlp(2);
    auto job = job_for(net, val);
    EXPECT_THROW(train(job, SampleSet<double>{{2}, 2, {}, {}}, quick(1)), ConfigError);
    job.trainable = {true, false};
    EXPECT_THROW(train(job, blobs(1, 8), quick(1)), ConfigError);
}

TEST(Trainer, HistoryCsvFormat) {
    std::ostringstream os;
    write_history_csv(os, {{0, 1e-3, 0.5, 0.25}, {1, 1e-4, 0.125, 1.0}});
    EXPECT_EQ(os.str(), "epoch,lr,train_loss,val_metric\n0,0.001,0.5,0.25\n1,0.0001,0.125,1\n");
}
