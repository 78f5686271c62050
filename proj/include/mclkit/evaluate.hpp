#pragma once

// Evaluation metrics and experiment harnesses.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "mclkit/checkpoint.hpp"
#include "mclkit/distill.hpp"
#include "mclkit/metrics.hpp"

namespace mclkit {

/// Majority vote over the k nearest rows of `train` (Euclidean, double precision).
/// Distance ties go to the lower train index, vote ties to the lowest class.
inline int knn_vote(const std::vector<std::vector<double>>& train, const std::vector<int>& labels, std::size_t classes,
                    const std::vector<double>& query, std::size_t k) {
    if (k == 0) throw ConfigError("knn: k must be positive");
    if (k > train.size())
        throw ConfigError("knn: k = " + std::to_string(k) + " exceeds the " + std::to_string(train.size()) +
                          " reference samples");
    std::vector<std::pair<double, std::size_t>> dist(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) {
            const double diff = train[i][j] - query[j];
            d += diff * diff;
        }
        dist[i] = {d, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::vector<std::size_t> votes(classes, 0);
    for (std::size_t i = 0; i < k; ++i) {
        const int l = labels[dist[i].second];
        if (l < 0 || static_cast<std::size_t>(l) >= classes) throw ConfigError("knn: reference sample without label");
        ++votes[static_cast<std::size_t>(l)];
    }
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

template <typename T>
std::vector<double> measurement_vector(const CompressiveNet<T>& m, const Tensor<T>& x) {
    const Tensor<T> z = sense(m, x);
    return std::vector<double>(z.values().begin(), z.values().end());
}

/// KNN accuracy in the compressive domain: train and test samples are sensed with E,
/// vectorized and classified against the training measurements.
template <typename T>
double knn_compressive(const CompressiveNet<T>& m, const SampleSet<T>& train_set, const SampleSet<T>& test_set,
                       std::size_t k) {
    if (test_set.empty()) throw ConfigError("knn: empty test set");
    if (k > train_set.size())
        throw ConfigError("knn: k = " + std::to_string(k) + " exceeds the " + std::to_string(train_set.size()) +
                          " training samples");
    std::vector<std::vector<double>> ref;
    ref.reserve(train_set.size());
    for (const auto& x : train_set.samples) ref.push_back(measurement_vector(m, x));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i)
        if (knn_vote(ref, train_set.labels, m.spec.classes, measurement_vector(m, test_set.samples[i]), k) ==
            test_set.labels[i])
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(test_set.size());
}

struct ReportRow {
    std::string run_id;
    std::string mask_s1 = "-";
    std::string mask_s2 = "-";
    std::string mask_s3 = "-";
    std::string config;
    std::string seed;
    std::string metric;
    double value = 0.0;
};

inline void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
    os << "run_id,mask_s1,mask_s2,mask_s3,config,seed,metric,value\n";
    for (const auto& r : rows)
        os << r.run_id << ',' << r.mask_s1 << ',' << r.mask_s2 << ',' << r.mask_s3 << ',' << r.config << ',' << r.seed
           << ',' << r.metric << ',' << format_double(r.value) << '\n';
}

inline std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

template <typename T>
std::uint32_t model_crc32(const CompressiveNet<T>& m) {
    return crc32(encode_model(m));
}

template <typename T>
struct TrainSplits {
    const SampleSet<T>& train;
    const SampleSet<T>& validation;
    const SampleSet<T>& test;
};

struct StudentOptions {
    MeasurementConfig measurement;
    std::size_t width = 8;
    Capacity capacity = Capacity::small;
};

template <typename T>
struct AblationRun {
    StageMask mask;
    MclModel<T> student;
    RunLog log;
    double test_accuracy = 0.0;
};

template <typename T>
struct AblationResult {
    std::vector<ReportRow> rows;  // one per mask, in table order
    std::vector<AblationRun<T>> runs;
    std::uint32_t teacher_crc = 0;
};

/// Trains one student per stage mask against the same frozen teacher and seed.
/// The config column records the measurement and the teacher checksum.
template <typename T>
AblationResult<T> run_ablation(const PriorModel<T>& teacher, TrainSplits<T> data, const StudentOptions& opt,
                               const TrainConfig& cfg) {
    cfg.validate();
    AblationResult<T> out;
    out.teacher_crc = model_crc32(teacher);
    const std::string config = opt.measurement.str() + "@teacher:" + hex32(out.teacher_crc);
    for (const StageMask& mask : StageMask::table_order()) {
        if (model_crc32(teacher) != out.teacher_crc) throw StateError("ablation: teacher changed between runs");
        AblationRun<T> run{mask,
                           build_mcl<T>(teacher.spec.signal, opt.measurement, teacher.spec.classes,
                                        ModelKind::mcl_nonlinear, cfg.seed, opt.width, opt.capacity),
                           {},
                           0.0};
        train_mclwp(run.student, teacher, data.train, data.validation, cfg, mask, run.log);
        run.test_accuracy = accuracy<T>(run.student, data.test);
        const std::string m = mask.str();
        out.rows.push_back({"ablation-" + m, m.substr(0, 1), m.substr(1, 1), m.substr(2, 1), config,
                            std::to_string(cfg.seed), "test_accuracy", run.test_accuracy});
        out.runs.push_back(std::move(run));
    }
    return out;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw ConfigError("median of an empty list");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct ComparePriorResult {
    std::vector<ReportRow> rows;
    std::vector<double> with_prior;     // MCLwP test accuracy per seed
    std::vector<double> without_prior;  // MCLw/oP test accuracy per seed
    std::size_t parameter_count_with = 0;
    std::size_t parameter_count_without = 0;
};

/// Paired MCLw/oP and MCLwP runs per seed on the same student architecture, plus medians.
template <typename T>
ComparePriorResult compare_prior_effect(const PriorModel<T>& teacher, TrainSplits<T> data, const StudentOptions& opt,
                                        const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
    cfg.validate();
    if (seeds.empty()) throw ConfigError("compare_prior_effect: no seeds");
    ComparePriorResult out;
    const std::string config = opt.measurement.str();
    for (std::uint64_t seed : seeds) {
        TrainConfig c = cfg;
        c.seed = seed;
        auto make = [&] {
            return build_mcl<T>(teacher.spec.signal, opt.measurement, teacher.spec.classes, ModelKind::mcl_nonlinear,
                                seed, opt.width, opt.capacity);
        };
        MclModel<T> without = make();
        RunLog log_without;
        train_mclwop(without, data.train, data.validation, c, log_without);
        MclModel<T> with = make();
        RunLog log_with;
        train_mclwp(with, teacher, data.train, data.validation, c, StageMask{}, log_with);
        out.parameter_count_without = without.parameter_count();
        out.parameter_count_with = with.parameter_count();
        out.without_prior.push_back(accuracy<T>(without, data.test));
        out.with_prior.push_back(accuracy<T>(with, data.test));
        out.rows.push_back({"mclwop", "-", "-", "-", config, std::to_string(seed), "test_accuracy",
                            out.without_prior.back()});
        out.rows.push_back({"mclwp", "1", "1", "1", config, std::to_string(seed), "test_accuracy", out.with_prior.back()});
    }
    out.rows.push_back({"mclwop", "-", "-", "-", config, "median", "test_accuracy", median(out.without_prior)});
    out.rows.push_back({"mclwp", "1", "1", "1", config, "median", "test_accuracy", median(out.with_prior)});
    return out;
}

}  // namespace mclkit
