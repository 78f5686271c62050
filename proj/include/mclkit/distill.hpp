#pragma once

// Teacher training, the three knowledge-transfer stages, the baselines and the
// self-labeling (semi-supervised) variants.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mclkit/losses.hpp"
#include "mclkit/metrics.hpp"
#include "mclkit/models.hpp"
#include "mclkit/trainer.hpp"

namespace mclkit {

/// Which transfer stages run: s1 sensing match, s2 synthesis match, s3 distillation.
struct StageMask {
    bool s1 = true;
    bool s2 = true;
    bool s3 = true;

    bool operator==(const StageMask&) const = default;

    static StageMask parse(const std::string& text) {
        if (text.size() != 3 || text.find_first_not_of("01") != std::string::npos)
            throw ConfigError("mask must be three 0/1 characters, got '" + text + "'");
        return {text[0] == '1', text[1] == '1', text[2] == '1'};
    }
    std::string str() const { return std::string{s1 ? '1' : '0', s2 ? '1' : '0', s3 ? '1' : '0'}; }

    /// The eight masks in ablation-table row order.
    static std::array<StageMask, 8> table_order() {
        return {{{false, false, false},
                 {true, false, false},
                 {false, true, false},
                 {false, false, true},
                 {true, true, false},
                 {false, true, true},
                 {true, false, true},
                 {true, true, true}}};
    }
};

struct StageResult {
    std::string name;
    std::string metric;  // "val_accuracy" or "val_l1"
    std::size_t first_epoch = 0;
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;  // global epoch number
    double best_metric = 0.0;
    double seconds = 0.0;
};

/// Training record of one pipeline: every epoch in one global numbering plus per-stage summaries.
struct RunLog {
    History history;
    std::vector<StageResult> stages;
    std::vector<std::string> notes;

    template <typename T>
    void add(const std::string& name, const std::string& metric, const TrainResult<T>& r) {
        StageResult s{name, metric, history.size(), r.history.size(), history.size() + r.best_epoch, r.best_metric,
                      r.seconds};
        for (EpochRecord e : r.history) {
            e.epoch = history.size();
            history.push_back(e);
        }
        stages.push_back(s);
    }
};

namespace detail {

template <typename T>
using Stacks = std::span<LayerStack<T>* const>;

// Forward through every stack; stacks below `first_live` run without caching.
template <typename T>
Tensor<T> forward_chain(Stacks<T> stacks, const Tensor<T>& x, std::size_t first_live) {
    Tensor<T> h = x;
    for (std::size_t i = 0; i < stacks.size(); ++i) h = stacks[i]->forward(h, i >= first_live);
    return h;
}

template <typename T>
void backward_chain(Stacks<T> stacks, Tensor<T> g, std::size_t first_live) {
    for (std::size_t i = stacks.size(); i-- > first_live;) g = stacks[i]->backward(g);
}

inline std::size_t first_trainable(const std::vector<bool>& trainable) {
    for (std::size_t i = 0; i < trainable.size(); ++i)
        if (trainable[i]) return i;
    return trainable.size();
}

template <typename T>
TrainJob<T> make_job(std::string name, std::vector<LayerStack<T>*> stacks, std::vector<bool> trainable) {
    TrainJob<T> job;
    job.name = std::move(name);
    job.stacks = std::move(stacks);
    job.trainable = std::move(trainable);
    return job;
}

template <typename T>
double mean_l1_to(const std::function<Tensor<T>(const Tensor<T>&)>& produce,
                  const std::function<Tensor<T>(const Tensor<T>&)>& target, const SampleSet<T>& set) {
    if (set.empty()) throw ConfigError("validation set is empty");
    double sum = 0.0;
    for (const auto& x : set.samples) sum += l1_loss(produce(x), target(x)).loss;
    return sum / static_cast<double>(set.size());
}

/// Cross-entropy on the composition of `stacks`, optionally plus lambda * symmetric KL
/// against `teacher` logits. Validation: accuracy of the composition.
template <typename T>
TrainResult<T> run_inference(const std::string& name, std::vector<LayerStack<T>*> stacks, std::vector<bool> trainable,
                             const SampleSet<T>& train_set, const SampleSet<T>& val, const TrainConfig& cfg,
                             RunLog& log, const CompressiveNet<T>* teacher = nullptr, double lambda = 0.0,
                             const TrainOptions& opt = {}) {
    for (int l : train_set.labels)
        if (l == kUnlabeled) throw ConfigError(name + ": inference training needs labels for every sample");
    auto job = make_job(name, stacks, trainable);
    const std::size_t live = first_trainable(job.trainable);
    const bool distill = teacher != nullptr && lambda != 0.0;
    job.objective = [live, distill, teacher, lambda](Stacks<T> s, const Tensor<T>& x, int label) {
        const Tensor<T> z = forward_chain(s, x, live);
        LossResult<T> ce = cross_entropy(z, static_cast<std::size_t>(label));
        double loss = ce.loss;
        if (distill) {
            const auto kl = symmetric_kl(teacher->logits(x), z);
            loss += lambda * kl.loss;
            const T w = static_cast<T>(lambda);
            for (std::size_t i = 0; i < ce.grad.size(); ++i) ce.grad[i] += w * kl.grad_b[i];
        }
        backward_chain(s, std::move(ce.grad), live);
        return loss;
    };
    std::vector<const LayerStack<T>*> cstacks(stacks.begin(), stacks.end());
    job.validate = [cstacks, &val] { return chain_accuracy(std::span<const LayerStack<T>* const>(cstacks), val); };
    job.selection = Selection::maximize;
    auto r = train(job, train_set, cfg, opt);
    log.add(name, "val_accuracy", r);
    return r;
}

/// l1 between produce(x) (through `stacks`) and a frozen target(x). Validation: mean l1.
template <typename T>
TrainResult<T> run_matching(const std::string& name, std::vector<LayerStack<T>*> stacks,
                            std::function<Tensor<T>(const Tensor<T>&)> target, const SampleSet<T>& train_set,
                            const SampleSet<T>& val, const TrainConfig& cfg, RunLog& log) {
    auto job = make_job(name, stacks, std::vector<bool>(stacks.size(), true));
    job.objective = [target](Stacks<T> s, const Tensor<T>& x, int) {
        const Tensor<T> out = forward_chain(s, x, 0);
        auto r = l1_loss(out, target(x));
        backward_chain(s, std::move(r.grad_a), 0);
        return r.loss;
    };
    std::vector<const LayerStack<T>*> cstacks(stacks.begin(), stacks.end());
    job.validate = [cstacks, target, &val] {
        return mean_l1_to<T>(
            [&](const Tensor<T>& x) { return chain_infer(std::span<const LayerStack<T>* const>(cstacks), x); }, target,
            val);
    };
    job.selection = Selection::minimize;
    auto r = train(job, train_set, cfg);
    log.add(name, "val_l1", r);
    return r;
}

template <typename T>
void check_pair(const CompressiveNet<T>& student, const CompressiveNet<T>& teacher) {
    if (student.spec.measurement != teacher.spec.measurement)
        throw ShapeError("student measurement " + shape_string(student.spec.measurement) +
                         " differs from teacher measurement " + shape_string(teacher.spec.measurement));
    if (student.spec.signal != teacher.spec.signal)
        throw ShapeError("student signal " + shape_string(student.spec.signal) + " differs from teacher signal " +
                         shape_string(teacher.spec.signal));
}

}  // namespace detail

/// N alone on raw signals.
template <typename T>
TrainResult<T> train_task_on_signals(LayerStack<T>& task, const SampleSet<T>& train_set, const SampleSet<T>& val,
                                     const TrainConfig& cfg, RunLog& log, const std::string& name = "task-raw") {
    return detail::run_inference<T>(name, {&task}, {true}, train_set, val, cfg, log);
}

/// E and D as an autoencoder: minimize |x - D(E(x))|_1. Labels are ignored.
template <typename T>
TrainResult<T> train_autoencoder(CompressiveNet<T>& m, const SampleSet<T>& train_set, const SampleSet<T>& val,
                                 const TrainConfig& cfg, RunLog& log, const std::string& name = "autoencoder") {
    return detail::run_matching<T>(name, {&m.sense_net, &m.synth_net}, [](const Tensor<T>& x) { return x; }, train_set,
                                   val, cfg, log);
}

/// Cross-entropy through E, D and N jointly.
template <typename T>
TrainResult<T> train_inference(CompressiveNet<T>& m, const SampleSet<T>& train_set, const SampleSet<T>& val,
                               const TrainConfig& cfg, RunLog& log, const std::string& name = "inference") {
    return detail::run_inference<T>(name, {&m.sense_net, &m.synth_net, &m.task_net}, {true, true, true}, train_set, val,
                                    cfg, log);
}

/// Teacher training: (a) N_P on raw signals, (b) E_P/D_P autoencoder, (c) joint cross-entropy.
template <typename T>
void train_prior_supervised(PriorModel<T>& prior, const SampleSet<T>& train_set, const SampleSet<T>& val,
                            const TrainConfig& cfg, RunLog& log) {
    cfg.validate();
    train_task_on_signals(prior.task_net, train_set, val, cfg, log, "prior-task-raw");
    train_autoencoder<T>(prior, train_set, val, cfg, log, "prior-autoencoder");
    train_inference<T>(prior, train_set, val, cfg, log, "prior-joint");
}

/// Stage 1: E matches the teacher's measurements E_P(x) under l1.
template <typename T>
TrainResult<T> stage1_transfer(MclModel<T>& student, const PriorModel<T>& teacher, const SampleSet<T>& train_set,
                               const SampleSet<T>& val, const TrainConfig& cfg, RunLog& log) {
    detail::check_pair<T>(student, teacher);
    return detail::run_matching<T>("stage1-sensing", {&student.sense_net},
                                   [&teacher](const Tensor<T>& x) { return teacher.sense_net.infer(x); }, train_set, val,
                                   cfg, log);
}

/// Stage 2: D is initialized from D_P when the architectures agree (otherwise the
/// student keeps its initialization and a note is logged); then E and D match the
/// teacher's synthesized features D_P(E_P(x)) under l1.
template <typename T>
TrainResult<T> stage2_transfer(MclModel<T>& student, const PriorModel<T>& teacher, const SampleSet<T>& train_set,
                               const SampleSet<T>& val, const TrainConfig& cfg, RunLog& log) {
    detail::check_pair<T>(student, teacher);
    if (student.synth_net.same_structure(teacher.synth_net))
        student.synth_net.copy_parameters_from(teacher.synth_net);
    else
        log.notes.push_back("stage2: synthesis architectures differ; student synthesis keeps its initialization");
    return detail::run_matching<T>(
        "stage2-synthesis", {&student.sense_net, &student.synth_net},
        [&teacher](const Tensor<T>& x) { return teacher.synth_net.infer(teacher.sense_net.infer(x)); }, train_set, val,
        cfg, log);
}

/// Stage 3: N is initialized from N_P; then all of E, D, N minimize cross-entropy plus
/// lambda * symmetric KL between teacher and student predictions.
template <typename T>
TrainResult<T> stage3_transfer(MclModel<T>& student, const PriorModel<T>& teacher, const SampleSet<T>& train_set,
                               const SampleSet<T>& val, const TrainConfig& cfg, RunLog& log, bool distill = true,
                               bool copy_task = true) {
    detail::check_pair<T>(student, teacher);
    if (student.spec.classes != teacher.spec.classes)
        throw ConfigError("student has " + std::to_string(student.spec.classes) + " classes, teacher has " +
                          std::to_string(teacher.spec.classes));
    if (copy_task) student.task_net.copy_parameters_from(teacher.task_net);
    return detail::run_inference<T>("stage3-distill", {&student.sense_net, &student.synth_net, &student.task_net},
                                    {true, true, true}, train_set, val, cfg, log, distill ? &teacher : nullptr,
                                    distill ? cfg.lambda : 0.0);
}

/// Progressive transfer with a stage mask. Stage 1 runs when s1 is set. The synthesis
/// copy and stage 2 run when s2 is set. When s3 is set, N is copied from N_P and the
/// distillation term is active; otherwise the final phase is plain cross-entropy
/// training. The all-false mask is therefore plain supervised training.
template <typename T>
void train_mclwp(MclModel<T>& student, const PriorModel<T>& teacher, const SampleSet<T>& train_set,
                 const SampleSet<T>& val, const TrainConfig& cfg, const StageMask& mask, RunLog& log) {
    cfg.validate();
    detail::check_pair<T>(student, teacher);
    if (mask.s1) stage1_transfer(student, teacher, train_set, val, cfg, log);
    if (mask.s2) stage2_transfer(student, teacher, train_set, val, cfg, log);
    if (mask.s3)
        stage3_transfer(student, teacher, train_set, val, cfg, log, true, true);
    else
        train_inference<T>(student, train_set, val, cfg, log, "stage3-inference");
}

/// MCL baseline: HOSVD initialization of the sensing (and multilinear synthesis)
/// factors, N pretrained on raw signals, then end-to-end cross-entropy.
template <typename T>
void train_mcl_baseline(MclModel<T>& student, const SampleSet<T>& train_set, const SampleSet<T>& val,
                        const TrainConfig& cfg, RunLog& log) {
    cfg.validate();
    hosvd_init(student, train_set.samples);
    train_task_on_signals(student.task_net, train_set, val, cfg, log, "mcl-task-raw");
    train_inference<T>(student, train_set, val, cfg, log, "mcl-end-to-end");
}

/// No-prior baseline: E and D pretrained as an autoencoder, then end-to-end cross-entropy.
template <typename T>
void train_mclwop(MclModel<T>& student, const SampleSet<T>& train_set, const SampleSet<T>& val, const TrainConfig& cfg,
                  RunLog& log) {
    cfg.validate();
    train_autoencoder<T>(student, train_set, val, cfg, log, "mclwop-autoencoder");
    train_inference<T>(student, train_set, val, cfg, log, "mclwop-end-to-end");
}

struct Selected {
    std::size_t index = 0;  // position in the pool
    int label = 0;
    double confidence = 0.0;
};

/// Pool samples whose top teacher probability is at least rho, in pool order.
template <typename T>
std::vector<Selected> self_label_select(const CompressiveNet<T>& teacher, const SampleSet<T>& pool, double rho) {
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
    std::vector<Selected> out;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const Tensor<T> p = predict(teacher, pool.samples[i]);
        const std::size_t c = argmax(p);
        if (static_cast<double>(p[c]) >= rho) out.push_back({i, static_cast<int>(c), static_cast<double>(p[c])});
    }
    return out;
}

struct RoundRecord {
    std::size_t round = 0;
    std::size_t labeled = 0;    // |enlarged labeled set| after the round
    std::size_t unlabeled = 0;  // |remaining pool| after the round
    std::size_t selected = 0;
};

template <typename T>
struct SemiSupResult {
    SampleSet<T> enlarged;   // final enlarged labeled set
    SampleSet<T> remaining;  // final unlabeled pool
    std::vector<RoundRecord> rounds;
    bool capped = false;
};

/// Self-labeling teacher training: (a) N_P on the labeled set, (b) E_P/D_P autoencoder on
/// labeled plus unlabeled samples, (c) rounds of `epochs_per_round` joint epochs on the
/// enlarged labeled set, each followed by moving confident pool samples (with the
/// teacher's label) into it. Stops when nothing is selected or at the round cap. The
/// returned teacher holds the parameters of the best validation epoch over all rounds.
template <typename T>
SemiSupResult<T> train_prior_semisup(PriorModel<T>& prior, const SampleSet<T>& labeled, const SampleSet<T>& pool,
                                     const SampleSet<T>& val, const TrainConfig& cfg, RunLog& log) {
    cfg.validate();
    if (labeled.empty()) throw ConfigError("semi-supervised training needs a non-empty labeled set");
    train_task_on_signals(prior.task_net, labeled, val, cfg, log, "prior-task-raw");
    SampleSet<T> everything = labeled;
    everything.append(pool);
    train_autoencoder<T>(prior, everything, val, cfg, log, "prior-autoencoder");

    SemiSupResult<T> res{labeled, pool.without_labels(), {}, false};
    const std::size_t total = res.enlarged.size() + res.remaining.size();
    TrainConfig round_cfg = cfg;
    round_cfg.epochs = cfg.epochs_per_round;
    std::vector<LayerStack<T>*> all = prior.stacks();
    ParamSnapshot<T> best;
    double best_metric = 0.0;
    std::size_t schedule_pos = 0;
    for (std::size_t round = 0;; ++round) {
        if (round == cfg.round_cap) {
            res.capped = true;
            log.notes.push_back("self-labeling stopped at the round cap of " + std::to_string(cfg.round_cap));
            break;
        }
        auto r = detail::run_inference<T>("prior-selflabel-round" + std::to_string(round), all, {true, true, true},
                                          res.enlarged, val, round_cfg, log, nullptr, 0.0, {schedule_pos, false});
        schedule_pos += round_cfg.epochs;
        if (round == 0 || r.best_metric > best_metric) {
            best_metric = r.best_metric;
            best = r.best;
        }
        const auto chosen = self_label_select<T>(prior, res.remaining, cfg.rho);
        std::vector<bool> taken(res.remaining.size(), false);
        for (const auto& c : chosen) {
            res.enlarged.add(res.remaining.samples[c.index], c.label);
            taken[c.index] = true;
        }
        SampleSet<T> rest{pool.shape, pool.classes, {}, {}};
        for (std::size_t i = 0; i < taken.size(); ++i)
            if (!taken[i]) rest.add(res.remaining.samples[i], kUnlabeled);
        res.remaining = std::move(rest);
        res.rounds.push_back({round, res.enlarged.size(), res.remaining.size(), chosen.size()});
        if (res.enlarged.size() + res.remaining.size() != total)
            throw StateError("self-labeling lost samples: " + std::to_string(res.enlarged.size()) + " + " +
                             std::to_string(res.remaining.size()) + " != " + std::to_string(total));
        if (round > 0 && res.rounds[round].labeled < res.rounds[round - 1].labeled)
            throw StateError("self-labeling shrank the labeled set");
        if (chosen.empty()) break;
    }
    restore(detail::Stacks<T>(all), best);
    return res;
}

/// Semi-supervised progressive transfer: stages 1 and 2 use labeled plus pool samples;
/// the final phase uses true labels on the labeled set and the frozen teacher's hard
/// labels (computed once) on the pool. With an empty pool this equals train_mclwp.
template <typename T>
void train_mclwp_semisup(MclModel<T>& student, const PriorModel<T>& teacher, const SampleSet<T>& labeled,
                         const SampleSet<T>& pool, const SampleSet<T>& val, const TrainConfig& cfg,
                         const StageMask& mask, RunLog& log) {
    cfg.validate();
    detail::check_pair<T>(student, teacher);
    SampleSet<T> everything = labeled;
    everything.append(pool.without_labels());
    SampleSet<T> pseudo = labeled;
    for (const auto& x : pool.samples) pseudo.add(x, static_cast<int>(argmax(teacher.logits(x))));

    if (mask.s1) stage1_transfer(student, teacher, everything, val, cfg, log);
    if (mask.s2) stage2_transfer(student, teacher, everything, val, cfg, log);
    if (mask.s3)
        stage3_transfer(student, teacher, pseudo, val, cfg, log, true, true);
    else
        train_inference<T>(student, pseudo, val, cfg, log, "stage3-inference");
}

}  // namespace mclkit
