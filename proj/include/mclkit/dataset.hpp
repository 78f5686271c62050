#pragma once

// Dataset files and splits.
//
// File layout (little-endian): "MCLD" | u32 version | u32 count | u32 rank |
// u32 dims[rank] | u32 classes | count x (f32 payload, u32 label). Label
// 0xFFFFFFFF marks an unlabeled sample.
//
// A dataset directory holds train.mcld and test.mcld, and optionally val.mcld.
// Without val.mcld the validation split is drawn from train.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "mclkit/binary_io.hpp"
#include "mclkit/rng.hpp"
#include "mclkit/sample_set.hpp"

namespace mclkit {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kUnlabeledSentinel = 0xFFFFFFFFu;

template <typename T>
struct DatasetBundle {
    Shape shape;
    std::size_t classes = 0;
    SampleSet<T> train;
    SampleSet<T> validation;
    SampleSet<T> test;
    SampleSet<T> unlabeled;
};

template <typename T>
std::vector<std::uint8_t> encode_dataset(const SampleSet<T>& set) {
    if (set.shape.empty()) throw ConfigError("dataset: sample shape is empty");
    ByteWriter w;
    w.text("MCLD");
    w.u32(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(set.size()));
    w.u32(static_cast<std::uint32_t>(set.shape.size()));
    for (std::size_t d : set.shape) w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(set.classes));
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (T v : set.samples[i].values()) w.f32(static_cast<float>(v));
        const int label = set.labels[i];
        if (label != kUnlabeled && (label < 0 || static_cast<std::size_t>(label) >= set.classes))
            throw LabelRangeError("dataset: label " + std::to_string(label) + " out of range for " +
                                  std::to_string(set.classes) + " classes");
        w.u32(label == kUnlabeled ? kUnlabeledSentinel : static_cast<std::uint32_t>(label));
    }
    return std::move(w.buffer());
}

template <typename T = float>
SampleSet<T> decode_dataset(std::span<const std::uint8_t> data, const std::string& what = "dataset") {
    ByteReader r(data, what);
    if (data.size() < 4 || r.text(4) != "MCLD") throw BadMagicError(what + ": missing MCLD magic");
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion)
        throw VersionError(what + ": format version " + std::to_string(version) + " is not supported");
    const std::uint32_t count = r.u32();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError(what + ": invalid rank " + std::to_string(rank));
    SampleSet<T> set;
    for (std::uint32_t k = 0; k < rank; ++k) {
        const std::uint32_t d = r.u32();
        if (d == 0) throw FormatError(what + ": zero dimension in sample shape");
        set.shape.push_back(d);
    }
    set.classes = r.u32();
    const std::size_t n = shape_size(set.shape);
    if (r.remaining() / (4 * (n + 1)) < count)
        throw TruncatedError(what + ": header announces " + std::to_string(count) + " samples but only " +
                             std::to_string(r.remaining() / (4 * (n + 1))) + " are present");
    set.samples.reserve(count);
    set.labels.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor<T> x(set.shape);
        for (auto& v : x.values()) v = static_cast<T>(r.f32());
        const std::uint32_t label = r.u32();
        if (label != kUnlabeledSentinel && label >= set.classes)
            throw LabelRangeError(what + ": sample " + std::to_string(i) + " has label " + std::to_string(label) +
                                  " but the file declares " + std::to_string(set.classes) + " classes");
        set.samples.push_back(std::move(x));
        set.labels.push_back(label == kUnlabeledSentinel ? kUnlabeled : static_cast<int>(label));
    }
    if (r.remaining()) throw FormatError(what + ": trailing bytes after the last sample");
    return set;
}

template <typename T>
void write_dataset_file(const std::string& path, const SampleSet<T>& set) {
    write_file(path, encode_dataset(set));
}

template <typename T = float>
SampleSet<T> read_dataset_file(const std::string& path) {
    const auto data = read_file(path);
    return decode_dataset<T>(data, path);
}

struct DatasetHeader {
    Shape shape;
    std::size_t classes = 0;
    std::size_t count = 0;
};

/// Reads only the header of a dataset file.
inline DatasetHeader peek_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> head(64);
    in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
    head.resize(static_cast<std::size_t>(in.gcount()));
    ByteReader r(head, path);
    if (head.size() < 4 || r.text(4) != "MCLD") throw BadMagicError(path + ": missing MCLD magic");
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion)
        throw VersionError(path + ": format version " + std::to_string(version) + " is not supported");
    DatasetHeader h;
    h.count = r.u32();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError(path + ": invalid rank " + std::to_string(rank));
    for (std::uint32_t k = 0; k < rank; ++k) h.shape.push_back(r.u32());
    h.classes = r.u32();
    return h;
}

/// Seeded random split of `set` into (rest, held-out) with `count` held-out samples.
/// Both parts keep the original sample order.
template <typename T>
std::pair<SampleSet<T>, SampleSet<T>> holdout_split(const SampleSet<T>& set, std::size_t count, std::uint64_t seed) {
    if (count >= set.size()) throw ConfigError("holdout split would leave no training samples");
    std::vector<std::size_t> idx(set.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed, 0x76616cULL);
    rng.shuffle(idx.begin(), idx.end());
    std::vector<std::size_t> held(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count));
    std::vector<std::size_t> rest(idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end());
    std::sort(held.begin(), held.end());
    std::sort(rest.begin(), rest.end());
    return {set.subset(rest), set.subset(held)};
}

struct LoadOptions {
    double validation_fraction = 0.1;  // used only when the directory has no val.mcld
    std::uint64_t seed = 0;
};

template <typename T = float>
DatasetBundle<T> load_dataset(const std::string& dir, const LoadOptions& opt = {}) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    if (!fs::is_directory(root)) throw ConfigError("dataset directory '" + dir + "' does not exist");
    for (const char* name : {"train.mcld", "test.mcld"})
        if (!fs::exists(root / name)) throw ConfigError("dataset directory '" + dir + "' has no " + name);

    SampleSet<T> all_train = read_dataset_file<T>((root / "train.mcld").string());
    SampleSet<T> test = read_dataset_file<T>((root / "test.mcld").string());
    if (test.shape != all_train.shape || test.classes != all_train.classes)
        throw FormatError("dataset: train and test files disagree on shape or class count");
    auto check_range = [](const SampleSet<T>& s, const std::string& which) {
        for (const auto& x : s.samples)
            for (T v : x.values())
                if (!(v >= T{0} && v <= T{1}))
                    throw FormatError("dataset: " + which + " holds values outside [0, 1]");
    };
    check_range(all_train, "train");
    check_range(test, "test");

    DatasetBundle<T> b;
    b.shape = all_train.shape;
    b.classes = all_train.classes;
    b.test = std::move(test);
    b.unlabeled = SampleSet<T>{b.shape, b.classes, {}, {}};
    SampleSet<T> labeled{b.shape, b.classes, {}, {}};
    for (std::size_t i = 0; i < all_train.size(); ++i) {
        if (all_train.labels[i] == kUnlabeled)
            b.unlabeled.add(all_train.samples[i], kUnlabeled);
        else
            labeled.add(all_train.samples[i], all_train.labels[i]);
    }
    if (fs::exists(root / "val.mcld")) {
        b.validation = read_dataset_file<T>((root / "val.mcld").string());
        if (b.validation.shape != b.shape || b.validation.classes != b.classes)
            throw FormatError("dataset: validation file disagrees on shape or class count");
        check_range(b.validation, "validation");
        b.train = std::move(labeled);
    } else {
        if (!(opt.validation_fraction > 0.0 && opt.validation_fraction < 1.0))
            throw ConfigError("validation fraction must lie in (0, 1)");
        const auto count = static_cast<std::size_t>(std::llround(opt.validation_fraction * labeled.size()));
        auto [rest, held] = holdout_split(labeled, std::max<std::size_t>(count, 1), opt.seed);
        b.train = std::move(rest);
        b.validation = std::move(held);
    }
    return b;
}

template <typename T>
void write_dataset(const std::string& dir, const DatasetBundle<T>& b) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    SampleSet<T> train = b.train;
    train.append(b.unlabeled);
    write_dataset_file((fs::path(dir) / "train.mcld").string(), train);
    write_dataset_file((fs::path(dir) / "val.mcld").string(), b.validation);
    write_dataset_file((fs::path(dir) / "test.mcld").string(), b.test);
}

template <typename T>
struct SemiSupSplit {
    SampleSet<T> labeled;
    SampleSet<T> unlabeled;          // labels withheld
    std::vector<int> hidden_labels;  // true labels of `unlabeled`, for evaluation only
};

/// Stratified labeled/unlabeled split: |L| = round(fraction * |train|), class quotas by
/// largest remainder, members drawn by a seeded shuffle within each class.
template <typename T>
SemiSupSplit<T> split_semisup(const SampleSet<T>& train, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("labeled fraction must lie in (0, 1]");
    if (train.empty()) throw ConfigError("split_semisup: empty training set");
    std::vector<std::vector<std::size_t>> by_class(train.classes);
    for (std::size_t i = 0; i < train.size(); ++i) {
        const int l = train.labels[i];
        if (l < 0 || static_cast<std::size_t>(l) >= train.classes)
            throw ConfigError("split_semisup: training sample " + std::to_string(i) + " has no valid label");
        by_class[static_cast<std::size_t>(l)].push_back(i);
    }
    const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size())));
    std::vector<std::size_t> quota(train.classes);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < train.classes; ++c) {
        const double exact = fraction * static_cast<double>(by_class[c].size());
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[c];
        remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i, ++assigned) ++quota[remainders[i].second];

    Rng rng(seed, 0x73656d69ULL);
    std::vector<bool> is_labeled(train.size(), false);
    for (std::size_t c = 0; c < train.classes; ++c) {
        if (by_class[c].empty()) continue;
        if (quota[c] == 0)
            throw ConfigError("labeled fraction " + std::to_string(fraction) + " leaves class " + std::to_string(c) +
                              " without labeled samples");
        auto members = by_class[c];
        rng.shuffle(members.begin(), members.end());
        for (std::size_t i = 0; i < quota[c]; ++i) is_labeled[members[i]] = true;
    }
    SemiSupSplit<T> out{SampleSet<T>{train.shape, train.classes, {}, {}},
                        SampleSet<T>{train.shape, train.classes, {}, {}}, {}};
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (is_labeled[i]) {
            out.labeled.add(train.samples[i], train.labels[i]);
        } else {
            out.unlabeled.add(train.samples[i], kUnlabeled);
            out.hidden_labels.push_back(train.labels[i]);
        }
    }
    return out;
}

struct SynthOptions {
    Shape shape{16, 16, 1};
    std::size_t classes = 4;
    std::size_t per_class = 200;
    double noise = 0.05;
    double test_fraction = 0.2;
    double validation_fraction = 0.1;
};

template <typename T>
struct SynthResult {
    DatasetBundle<T> bundle;
    std::vector<Tensor<T>> templates;
    double nearest_template_accuracy = 0.0;  // over every generated sample
};

/// Fraction of samples whose nearest template (Euclidean) is their own class.
template <typename T>
double nearest_template_accuracy(const std::vector<Tensor<T>>& templates, const SampleSet<T>& set) {
    if (set.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < templates.size(); ++c) {
            double d = 0.0;
            for (std::size_t j = 0; j < templates[c].size(); ++j) {
                const double diff = static_cast<double>(set.samples[i][j]) - static_cast<double>(templates[c][j]);
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (static_cast<int>(best) == set.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(set.size());
}

/// Synthetic classes: each class is a random rank-(2,2,1) template built from smooth
/// sinusoidal mode factors, rescaled into [0.15, 0.85]; samples add Gaussian noise and
/// are clipped to [0, 1]. Splits are stratified per class; sample order is shuffled.
template <typename T = float>
SynthResult<T> synth_dataset(std::uint64_t seed, const SynthOptions& opt = {}) {
    if (opt.shape.size() != 3 || shape_size(opt.shape) == 0) throw ConfigError("synth_dataset: shape must be HxWxC");
    if (opt.classes < 2) throw ConfigError("synth_dataset: need at least 2 classes");
    if (opt.per_class < 3) throw ConfigError("synth_dataset: need at least 3 samples per class");
    if (!(opt.noise >= 0.0)) throw ConfigError("synth_dataset: noise must be non-negative");
    if (!(opt.test_fraction > 0.0 && opt.validation_fraction > 0.0 && opt.test_fraction + opt.validation_fraction < 1.0))
        throw ConfigError("synth_dataset: split fractions must be positive and sum below 1");
    const std::size_t h = opt.shape[0], w = opt.shape[1], ch = opt.shape[2];
    Rng rng(seed, 0x73796e7468ULL);

    auto smooth_vector = [&rng](std::size_t n) {
        std::vector<double> v(n);
        const double freq = 0.5 + 2.5 * rng.uniform();
        const double phase = 2.0 * std::numbers::pi * rng.uniform();
        for (std::size_t i = 0; i < n; ++i)
            v[i] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / static_cast<double>(n) + phase);
        return v;
    };

    SynthResult<T> out;
    for (std::size_t c = 0; c < opt.classes; ++c) {
        const std::vector<double> u[2] = {smooth_vector(h), smooth_vector(h)};
        const std::vector<double> v[2] = {smooth_vector(w), smooth_vector(w)};
        std::vector<double> colour(ch);
        for (auto& x : colour) x = 0.5 + 0.5 * rng.uniform();
        double core[2][2];
        for (auto& row : core)
            for (auto& x : row) x = rng.uniform(-1.0, 1.0);
        Tensor<double> t(opt.shape);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                for (std::size_t k = 0; k < ch; ++k) {
                    double acc = 0.0;
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) acc += core[a][b] * u[a][i] * v[b][j];
                    t.at({i, j, k}) = acc * colour[k];
                }
        double peak = 0.0;
        for (double x : t.values()) peak = std::max(peak, std::abs(x));
        if (peak == 0.0) peak = 1.0;
        Tensor<T> tpl(opt.shape);
        for (std::size_t i = 0; i < t.size(); ++i) tpl[i] = static_cast<T>(0.5 + 0.35 * t[i] / peak);
        out.templates.push_back(std::move(tpl));
    }

    DatasetBundle<T> b;
    b.shape = opt.shape;
    b.classes = opt.classes;
    for (auto* s : {&b.train, &b.validation, &b.test, &b.unlabeled}) *s = SampleSet<T>{opt.shape, opt.classes, {}, {}};
    const auto n_test = static_cast<std::size_t>(std::llround(opt.test_fraction * opt.per_class));
    const auto n_val = static_cast<std::size_t>(std::llround(opt.validation_fraction * opt.per_class));
    if (n_test == 0 || n_val == 0 || n_test + n_val >= opt.per_class)
        throw ConfigError("synth_dataset: per-class count too small for the requested splits");

    SampleSet<T> all{opt.shape, opt.classes, {}, {}};
    std::vector<int> split_of;  // 0 train, 1 validation, 2 test
    for (std::size_t c = 0; c < opt.classes; ++c)
        for (std::size_t n = 0; n < opt.per_class; ++n) {
            Tensor<T> x = out.templates[c];
            for (auto& v : x.values())
                v = static_cast<T>(std::clamp(static_cast<double>(v) + opt.noise * rng.normal(), 0.0, 1.0));
            all.add(std::move(x), static_cast<int>(c));
            split_of.push_back(n < n_test ? 2 : (n < n_test + n_val ? 1 : 0));
        }
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    for (std::size_t i : order) {
        SampleSet<T>& dst = split_of[i] == 0 ? b.train : (split_of[i] == 1 ? b.validation : b.test);
        dst.add(all.samples[i], all.labels[i]);
    }
    out.nearest_template_accuracy = nearest_template_accuracy(out.templates, all);
    if (opt.noise <= 0.1 && out.nearest_template_accuracy < 0.99)
        throw Error("synth_dataset: nearest-template self-check reached only " +
                    std::to_string(out.nearest_template_accuracy) + " (< 0.99)");
    out.bundle = std::move(b);
    return out;
}

}  // namespace mclkit
