#pragma once

// Mini-batch training engine.
//
// Every batch is split over a fixed number of gradient lanes: sample b of the batch
// goes to lane b % kLanes, each lane accumulates into its own replica of the
// networks, and lane gradients are summed in lane order. The arithmetic therefore
// does not depend on how many worker threads execute the lanes, and runs are
// bit-reproducible for a fixed seed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mclkit/optimize.hpp"
#include "mclkit/sample_set.hpp"
#include "mclkit/stack.hpp"

namespace mclkit {

inline constexpr std::size_t kLanes = 4;

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_metric = 0.0;
};

using History = std::vector<EpochRecord>;

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline void write_history_csv(std::ostream& os, const History& history) {
    os << "epoch,lr,train_loss,val_metric\n";
    for (const auto& r : history)
        os << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.train_loss) << ','
           << format_double(r.val_metric) << '\n';
}

enum class Selection { maximize, minimize };

/// Runs forward/backward for one sample on the given replica stacks and returns its loss.
template <typename T>
using SampleObjective = std::function<double(std::span<LayerStack<T>* const>, const Tensor<T>&, int)>;

template <typename T>
struct TrainJob {
    std::string name;
    std::vector<LayerStack<T>*> stacks;  // networks the objective runs through, in objective order
    std::vector<bool> trainable;         // parallel to stacks; frozen stacks are never updated
    SampleObjective<T> objective;
    std::function<double()> validate;    // metric on the live networks, evaluated after each epoch
    Selection selection = Selection::maximize;
    std::function<void(const EpochRecord&)> on_epoch_end;  // optional
};

struct TrainOptions {
    std::size_t epoch_offset = 0;  // schedule position of the first epoch
    bool restore_best = true;
};

template <typename T>
using ParamSnapshot = std::vector<std::vector<T>>;

template <typename T>
ParamSnapshot<T> snapshot(std::span<LayerStack<T>* const> stacks) {
    ParamSnapshot<T> snap;
    for (LayerStack<T>* s : stacks)
        for (const Param<T>* p : std::as_const(*s).params()) snap.push_back(p->value.values());
    return snap;
}

template <typename T>
void restore(std::span<LayerStack<T>* const> stacks, const ParamSnapshot<T>& snap) {
    std::size_t i = 0;
    for (LayerStack<T>* s : stacks)
        for (Param<T>* p : s->params()) p->value.values() = snap.at(i++);
    if (i != snap.size()) throw StateError("snapshot does not match the networks it is restored into");
}

template <typename T>
struct TrainResult {
    History history;
    std::size_t best_epoch = 0;  // index into history
    double best_metric = 0.0;
    std::size_t samples_per_epoch = 0;
    double seconds = 0.0;
    ParamSnapshot<T> best;  // trainable parameters at the best epoch
};

/// Worker count: `requested` if non-zero, else hardware concurrency, capped by MCLKIT_THREADS.
inline std::size_t worker_count(std::size_t requested = 0) {
    std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MCLKIT_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
    }
    return std::clamp<std::size_t>(n, 1, kLanes);
}

template <typename T>
TrainResult<T> train(TrainJob<T>& job, const SampleSet<T>& data, const TrainConfig& cfg, const TrainOptions& opt = {}) {
    cfg.validate(false);
    if (data.empty()) throw ConfigError(job.name + ": empty training data");
    if (job.stacks.size() != job.trainable.size()) throw ConfigError(job.name + ": trainable mask size mismatch");
    const auto start = std::chrono::steady_clock::now();

    std::vector<LayerStack<T>*> updated;
    for (std::size_t s = 0; s < job.stacks.size(); ++s)
        if (job.trainable[s]) updated.push_back(job.stacks[s]);
    std::vector<Param<T>*> master;
    for (LayerStack<T>* s : updated)
        for (Param<T>* p : s->params()) master.push_back(p);

    // lanes[l] holds one replica per job stack
    std::vector<std::vector<LayerStack<T>>> lanes(kLanes);
    std::vector<std::vector<LayerStack<T>*>> lane_ptrs(kLanes);
    for (std::size_t l = 0; l < kLanes; ++l) {
        lanes[l].reserve(job.stacks.size());
        for (LayerStack<T>* s : job.stacks) lanes[l].push_back(*s);
        for (auto& s : lanes[l]) lane_ptrs[l].push_back(&s);
    }
    const std::size_t threads = worker_count(cfg.threads);

    AdamState<T> adam;
    Rng rng(cfg.seed, 0x7472616eULL);
    const AugmentFlags flags = AugmentFlags::from(cfg);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult<T> result;
    result.samples_per_epoch = data.size();
    bool have_best = false;

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const std::size_t epoch = opt.epoch_offset + e;
        const double lr = cfg.lr_at(epoch);
        rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;

        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            const std::size_t count = end - begin;
            std::vector<Tensor<T>> batch;
            batch.reserve(count);
            for (std::size_t b = begin; b < end; ++b) batch.push_back(data.samples[order[b]]);
            if (flags.active()) batch = augment(std::span<const Tensor<T>>(batch), flags, rng);

            std::vector<double> lane_loss(kLanes, 0.0);
            for (std::size_t l = 0; l < kLanes; ++l)
                for (std::size_t s = 0; s < job.stacks.size(); ++s) {
                    lanes[l][s].copy_parameters_from(*job.stacks[s]);
                    lanes[l][s].zero_grad();
                }
            auto run_lane = [&](std::size_t l) {
                for (std::size_t b = l; b < count; b += kLanes)
                    lane_loss[l] += job.objective(lane_ptrs[l], batch[b], data.labels[order[begin + b]]);
            };
            if (threads <= 1) {
                for (std::size_t l = 0; l < kLanes; ++l) run_lane(l);
            } else {
                std::vector<std::jthread> workers;
                for (std::size_t w = 1; w < threads; ++w)
                    workers.emplace_back([&, w] {
                        for (std::size_t l = w; l < kLanes; l += threads) run_lane(l);
                    });
                for (std::size_t l = 0; l < kLanes; l += threads) run_lane(l);
            }

            double batch_loss = 0.0;
            for (double v : lane_loss) batch_loss += v;
            if (!std::isfinite(batch_loss)) {
                std::ostringstream dump;
                dump << job.name << ": non-finite loss at epoch " << epoch << ", batch starting at " << begin
                     << ", lr " << lr << "; lane losses";
                for (double v : lane_loss) dump << ' ' << v;
                for (std::size_t s = 0; s < job.stacks.size(); ++s) {
                    const auto names = job.stacks[s]->param_names();
                    const auto ps = std::as_const(*job.stacks[s]).params();
                    for (std::size_t i = 0; i < ps.size(); ++i) {
                        double peak = 0.0;
                        for (T v : ps[i]->value.values()) peak = std::max(peak, std::abs(static_cast<double>(v)));
                        dump << "; stack " << s << " " << names[i] << " max|w|=" << peak;
                    }
                }
                throw NonFiniteError(dump.str());
            }
            epoch_loss += batch_loss;

            // Reduce lane gradients in lane order into the master parameters.
            const T scale = T{1} / static_cast<T>(count);
            std::size_t mi = 0;
            for (std::size_t s = 0; s < job.stacks.size(); ++s) {
                if (!job.trainable[s]) continue;
                std::vector<std::vector<Param<T>*>> lane_params(kLanes);
                for (std::size_t l = 0; l < kLanes; ++l) lane_params[l] = lanes[l][s].params();
                for (std::size_t pi = 0; pi < lane_params[0].size(); ++pi, ++mi) {
                    auto& g = master[mi]->grad.values();
                    g = lane_params[0][pi]->grad.values();
                    for (std::size_t l = 1; l < kLanes; ++l) {
                        const auto& lg = lane_params[l][pi]->grad.values();
                        for (std::size_t j = 0; j < g.size(); ++j) g[j] += lg[j];
                    }
                    for (auto& v : g) v *= scale;
                }
            }
            adam_step(std::span<Param<T>* const>(master), adam, lr);
            max_norm_project(std::span<Param<T>* const>(master), cfg.max_norm);
        }

        EpochRecord rec{epoch, lr, epoch_loss / static_cast<double>(data.size()), job.validate()};
        result.history.push_back(rec);
        const bool better = !have_best || (job.selection == Selection::maximize ? rec.val_metric > result.best_metric
                                                                                 : rec.val_metric < result.best_metric);
        if (better) {
            have_best = true;
            result.best_metric = rec.val_metric;
            result.best_epoch = result.history.size() - 1;
            result.best = snapshot(std::span<LayerStack<T>* const>(updated));
        }
        if (job.on_epoch_end) job.on_epoch_end(rec);
    }
    if (opt.restore_best) restore(std::span<LayerStack<T>* const>(updated), result.best);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace mclkit
