#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "mclkit/dataset.hpp"
#include "mclkit/evaluate.hpp"

using namespace mclkit;

namespace {

// Full sort by (distance, index), then count votes.
int brute_knn(const std::vector<std::vector<double>>& ref, const std::vector<int>& labels, std::size_t classes,
              const std::vector<double>& q, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        double s = 0;
        for (std::size_t j = 0; j < q.size(); ++j) s += (ref[i][j] - q[j]) * (ref[i][j] - q[j]);
        d.push_back({s, i});
    }
    std::sort(d.begin(), d.end());
    std::vector<int> votes(classes, 0);
    for (std::size_t i = 0; i < k; ++i) ++votes[std::size_t(labels[d[i].second])];
    int best = 0;
    for (std::size_t c = 1; c < classes; ++c)
        if (votes[c] > votes[std::size_t(best)]) best = int(c);
    return best;
}

SynthResult<float> tiny_data() {
    SynthOptions o;
    o.shape = {8, 8, 1};
    o.classes = 3;
    o.per_class = 20;
    return synth_dataset<float>(9, o);
}

TrainConfig tiny() {
    TrainConfig c;
    c.epochs = 1;
    c.lr_values = {1e-3};
    c.lr_switch = {};
    c.batch_size = 8;
    c.flip = false;
    c.shift_fraction = 0.0;
    return c;
}

}  // namespace

TEST(Knn, MatchesBruteForceOracle) {
    Rng rng(1);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 5 + rng.below(40), dim = 1 + rng.below(6), classes = 2 + rng.below(4);
        std::vector<std::vector<double>> ref(n, std::vector<double>(dim));
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            // coarse grid values create many distance and vote ties
            for (auto& v : ref[i]) v = double(rng.below(3));
            labels[i] = int(rng.below(classes));
        }
        std::vector<double> q(dim);
        for (auto& v : q) v = double(rng.below(3));
        for (std::size_t k : {std::size_t(1), std::size_t(3), std::size_t(5), n}) {
            if (k > n) continue;
            EXPECT_EQ(knn_vote(ref, labels, classes, q, k), brute_knn(ref, labels, classes, q, k));
        }
    }
}

TEST(Knn, TiesAndErrors) {
    const std::vector<std::vector<double>> ref{{0.0}, {1.0}, {-1.0}, {2.0}};
    const std::vector<int> labels{1, 0, 2, 0};
    // equidistant neighbours at +-1: lower index (label 0) enters first
    EXPECT_EQ(knn_vote(ref, labels, 3, {0.0}, 2), 0);
    // three-way vote tie goes to the lowest class
    EXPECT_EQ(knn_vote(ref, labels, 3, {0.0}, 3), 0);
    EXPECT_THROW(knn_vote(ref, labels, 3, {0.0}, 0), ConfigError);
    EXPECT_THROW(knn_vote(ref, labels, 3, {0.0}, 5), ConfigError);
}

TEST(Knn, CompressiveUsesMeasurements) {
    const auto r = tiny_data();
    const auto m = build_mcl<float>({8, 8, 1}, MeasurementConfig::parse("4x4x1"), 3, ModelKind::mcl_nonlinear, 1, 2);
    const auto& tr = r.bundle.train;
    const auto& te = r.bundle.test;
    std::vector<std::vector<double>> ref;
    for (const auto& x : tr.samples) {
        const auto z = m.sense_net.infer(x);
        ref.emplace_back(z.values().begin(), z.values().end());
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < te.size(); ++i) {
        const auto z = m.sense_net.infer(te.samples[i]);
        if (brute_knn(ref, tr.labels, 3, {z.values().begin(), z.values().end()}, 5) == te.labels[i]) ++hits;
    }
    EXPECT_DOUBLE_EQ(knn_compressive(m, tr, te, 5), double(hits) / double(te.size()));
    EXPECT_THROW(knn_compressive(m, tr, te, tr.size() + 1), ConfigError);
}

TEST(Accuracy, MatchesArgmaxOracle) {
    const auto r = tiny_data();
    const auto m = build_prior<float>({8, 8, 1}, MeasurementConfig::parse("4x4x1"), 3, 3, 2);
    const auto& te = r.bundle.test;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < te.size(); ++i) {
        const auto z = m.task_net.infer(m.synth_net.infer(m.sense_net.infer(te.samples[i])));
        const auto it = std::max_element(z.values().begin(), z.values().end());
        if (int(it - z.values().begin()) == te.labels[i]) ++hits;
    }
    EXPECT_DOUBLE_EQ(accuracy<float>(m, te), double(hits) / double(te.size()));
    EXPECT_THROW(accuracy<float>(m, SampleSet<float>{{8, 8, 1}, 3, {}, {}}), ConfigError);
    EXPECT_THROW(accuracy<float>(m, te.without_labels()), ConfigError);
}

TEST(Report, CsvLayout) {
    std::ostringstream os;
    write_report_csv(os, {{"ablation-101", "1", "0", "1", "4x4x1@teacher:0000abcd", "3", "test_accuracy", 0.5}});
    EXPECT_EQ(os.str(),
              "run_id,mask_s1,mask_s2,mask_s3,config,seed,metric,value\n"
              "ablation-101,1,0,1,4x4x1@teacher:0000abcd,3,test_accuracy,0.5\n");
    EXPECT_EQ(hex32(0xabcu), "00000abc");
}

TEST(Median, OddEvenAndEmpty) {
    EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_DOUBLE_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
    EXPECT_THROW(median({}), ConfigError);
}

TEST(Ablation, EightRowsInTableOrderWithFixedTeacher) {
    const auto r = tiny_data();
    const auto teacher = build_prior<float>({8, 8, 1}, MeasurementConfig::parse("4x4x1"), 3, 3, 2);
    const auto crc = model_crc32(teacher);
    const TrainSplits<float> splits{r.bundle.train, r.bundle.validation, r.bundle.test};
    const auto res = run_ablation(teacher, splits, {MeasurementConfig::parse("4x4x1"), 2, Capacity::small}, tiny());
    ASSERT_EQ(res.rows.size(), 8u);
    const auto order = StageMask::table_order();
    for (std::size_t i = 0; i < 8; ++i) {
        const auto m = order[i].str();
        EXPECT_EQ(res.rows[i].run_id, "ablation-" + m);
        EXPECT_EQ(res.rows[i].mask_s1 + res.rows[i].mask_s2 + res.rows[i].mask_s3, m);
        EXPECT_EQ(res.rows[i].config, "4x4x1@teacher:" + hex32(crc));
        EXPECT_EQ(res.rows[i].value, accuracy<float>(res.runs[i].student, r.bundle.test));
    }
    EXPECT_EQ(model_crc32(teacher), crc);
    EXPECT_EQ(res.teacher_crc, crc);
}

TEST(ComparePrior, PairedRowsAndMedians) {
    const auto r = tiny_data();
    const auto teacher = build_prior<float>({8, 8, 1}, MeasurementConfig::parse("4x4x1"), 3, 3, 2);
    const TrainSplits<float> splits{r.bundle.train, r.bundle.validation, r.bundle.test};
    const auto res =
        compare_prior_effect(teacher, splits, {MeasurementConfig::parse("4x4x1"), 2, Capacity::small}, tiny(), {0, 1, 2});
    ASSERT_EQ(res.rows.size(), 8u);
    EXPECT_EQ(res.parameter_count_with, res.parameter_count_without);
    EXPECT_EQ(res.rows[6].seed, "median");
    EXPECT_DOUBLE_EQ(res.rows[6].value, median(res.without_prior));
    EXPECT_DOUBLE_EQ(res.rows[7].value, median(res.with_prior));
    EXPECT_THROW(compare_prior_effect(teacher, splits, {MeasurementConfig::parse("4x4x1"), 2, Capacity::small}, tiny(), {}),
                 ConfigError);
}
