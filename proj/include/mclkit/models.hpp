#pragma once

// Student (MCL) and teacher (prior-generating) models. Both consist of a sensing
// network E, a feature-synthesis network D and a task network N:
//
//     signal --E--> measurement --D--> feature (signal shape) --N--> logits

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mclkit/losses.hpp"
#include "mclkit/stack.hpp"
#include "mclkit/svd.hpp"

namespace mclkit {

struct MeasurementConfig {
    Shape dims;

    /// Parses "M1xM2xM3".
    static MeasurementConfig parse(const std::string& text) {
        MeasurementConfig cfg;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const std::size_t next = std::min(text.find('x', pos), text.size());
            const std::string part = text.substr(pos, next - pos);
            if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
                throw ConfigError("measurement must look like M1xM2xM3, got '" + text + "'");
            cfg.dims.push_back(std::stoul(part));
            pos = next + 1;
        }
        return cfg;
    }

    std::string str() const {
        std::string s;
        for (std::size_t k = 0; k < dims.size(); ++k) s += (k ? "x" : "") + std::to_string(dims[k]);
        return s;
    }

    /// prod(M_k) / prod(I_k).
    double rate(const Shape& signal) const {
        validate(signal);
        return static_cast<double>(shape_size(dims)) / static_cast<double>(shape_size(signal));
    }

    void validate(const Shape& signal) const {
        if (dims.size() != signal.size())
            throw ConfigError("measurement " + str() + " has rank " + std::to_string(dims.size()) +
                              " but the signal " + shape_string(signal) + " has rank " + std::to_string(signal.size()));
        for (std::size_t k = 0; k < dims.size(); ++k) {
            if (dims[k] == 0) throw ConfigError("measurement dims must be positive");
            if (dims[k] > signal[k])
                throw ConfigError("measurement dim M" + std::to_string(k + 1) + "=" + std::to_string(dims[k]) +
                                  " exceeds signal dim " + std::to_string(signal[k]));
        }
    }
};

enum class ModelKind : std::uint32_t { mcl_multilinear = 0, mcl_nonlinear = 1, prior = 2 };
enum class Capacity : std::uint32_t { small = 0, large = 1 };

inline const char* to_string(ModelKind k) {
    switch (k) {
        case ModelKind::mcl_multilinear: return "mcl-multilinear";
        case ModelKind::mcl_nonlinear: return "mcl-nonlinear";
        case ModelKind::prior: return "prior";
    }
    return "?";
}

struct ModelSpec {
    ModelKind kind = ModelKind::mcl_multilinear;
    Shape signal;
    Shape measurement;
    std::size_t classes = 0;
    Capacity capacity = Capacity::small;
    std::size_t width = 8;  // base channel count of the conv blocks

    bool operator==(const ModelSpec&) const = default;
};

/// Shared layout of MclModel and PriorModel.
template <typename T>
struct CompressiveNet {
    ModelSpec spec;
    LayerStack<T> sense_net;
    LayerStack<T> synth_net;
    LayerStack<T> task_net;

    std::vector<LayerStack<T>*> stacks() { return {&sense_net, &synth_net, &task_net}; }
    std::vector<const LayerStack<T>*> stacks() const { return {&sense_net, &synth_net, &task_net}; }

    std::size_t parameter_count() const {
        return sense_net.parameter_count() + synth_net.parameter_count() + task_net.parameter_count();
    }

    Tensor<T> logits(const Tensor<T>& x) const { return task_net.infer(synth_net.infer(sense_net.infer(x))); }
};

template <typename T>
struct MclModel : CompressiveNet<T> {};

template <typename T>
struct PriorModel : CompressiveNet<T> {};

namespace detail {

inline void check_signal(const Shape& signal) {
    if (signal.size() != 3) throw ConfigError("signal must be HxWxC, got " + shape_string(signal));
    for (std::size_t d : signal)
        if (d == 0) throw ConfigError("signal dims must be positive");
}

inline void check_classes(std::size_t classes) {
    if (classes < 2) throw ConfigError("need at least 2 classes, got " + std::to_string(classes));
}

template <typename T>
void add_conv_relu(LayerStack<T>& s, std::size_t cin, std::size_t cout) {
    s.template add<Conv2d<T>>(cin, cout);
    s.template add<Relu<T>>();
}

}  // namespace detail

/// Number of 2x2 pooling stages of the teacher encoder: the largest p such that
/// both spatial dims are divisible by 2^p and stay at least (M_1, M_2).
inline std::size_t pooling_stages(const Shape& signal, const Shape& measurement) {
    std::size_t p = 0;
    while (true) {
        const std::size_t f = std::size_t{1} << (p + 1);
        if (signal[0] % f || signal[1] % f || signal[0] / f < measurement[0] || signal[1] / f < measurement[1]) break;
        ++p;
    }
    return p;
}

/// Task network: conv blocks with pooling while the map is large enough, then
/// global average pooling and a dense classifier.
template <typename T>
LayerStack<T> build_task_net(const Shape& signal, std::size_t classes, std::size_t width) {
    LayerStack<T> s(signal);
    detail::add_conv_relu(s, signal[2], width);
    std::size_t ch = width;
    for (std::size_t block = 0; block < 2; ++block) {
        const Shape cur = s.output_shape();
        if (cur[0] >= 4 && cur[1] >= 4) s.template add<MaxPool2<T>>();
        detail::add_conv_relu(s, ch, 2 * width);
        ch = 2 * width;
    }
    s.template add<GlobalAvgPool<T>>();
    s.template add<Dense<T>>(ch, classes);
    return s;
}

template <typename T>
LayerStack<T> build_prior_encoder(const Shape& signal, const Shape& measurement, std::size_t width, Capacity cap) {
    const std::size_t p = pooling_stages(signal, measurement);
    LayerStack<T> s(signal);
    detail::add_conv_relu(s, signal[2], width);
    if (cap == Capacity::large) detail::add_conv_relu(s, width, width);
    for (std::size_t i = 0; i < p; ++i) {
        s.template add<MaxPool2<T>>();
        detail::add_conv_relu(s, width, width);
        if (cap == Capacity::large) detail::add_conv_relu(s, width, width);
    }
    const Shape pooled = s.output_shape();
    s.template add<ModeProjection<T>>(pooled, measurement);
    return s;
}

/// Mirror of the teacher encoder; also the nonlinear synthesis network of the student.
template <typename T>
LayerStack<T> build_prior_decoder(const Shape& signal, const Shape& measurement, std::size_t width, Capacity cap) {
    const std::size_t p = pooling_stages(signal, measurement);
    const Shape pooled{signal[0] >> p, signal[1] >> p, width};
    LayerStack<T> s(measurement);
    s.template add<ModeProjection<T>>(measurement, pooled);
    s.template add<Relu<T>>();
    for (std::size_t i = 0; i < p; ++i) {
        s.template add<Upsample2<T>>();
        detail::add_conv_relu(s, width, width);
        if (cap == Capacity::large) detail::add_conv_relu(s, width, width);
    }
    if (cap == Capacity::large) detail::add_conv_relu(s, width, width);
    s.template add<Conv2d<T>>(width, signal[2]);
    return s;
}

/// Student with a single mode-projection sensing layer. A multilinear synthesis
/// network is one mode-projection back to the signal shape; a nonlinear one has
/// the same architecture as the teacher decoder.
template <typename T>
MclModel<T> build_mcl(const Shape& signal, const MeasurementConfig& cfg, std::size_t classes, ModelKind kind,
                      std::uint64_t seed, std::size_t width = 8, Capacity cap = Capacity::small) {
    detail::check_signal(signal);
    cfg.validate(signal);
    detail::check_classes(classes);
    if (kind == ModelKind::prior) throw ConfigError("build_mcl: kind must be a student kind");
    if (width == 0) throw ConfigError("width must be positive");
    MclModel<T> m;
    m.spec = {kind, signal, cfg.dims, classes, cap, width};
    m.sense_net = LayerStack<T>(signal);
    m.sense_net.template add<ModeProjection<T>>(signal, cfg.dims);
    if (kind == ModelKind::mcl_multilinear) {
        m.synth_net = LayerStack<T>(cfg.dims);
        m.synth_net.template add<ModeProjection<T>>(cfg.dims, signal);
    } else {
        m.synth_net = build_prior_decoder<T>(signal, cfg.dims, width, cap);
    }
    m.task_net = build_task_net<T>(signal, classes, width);
    Rng rng(seed, 0x6d6f64656cULL);
    for (auto* s : m.stacks()) s->initialize(rng);
    return m;
}

template <typename T>
PriorModel<T> build_prior(const Shape& signal, const MeasurementConfig& cfg, std::size_t classes, std::uint64_t seed,
                          std::size_t width = 8, Capacity cap = Capacity::small) {
    detail::check_signal(signal);
    cfg.validate(signal);
    detail::check_classes(classes);
    if (width == 0) throw ConfigError("width must be positive");
    PriorModel<T> m;
    m.spec = {ModelKind::prior, signal, cfg.dims, classes, cap, width};
    m.sense_net = build_prior_encoder<T>(signal, cfg.dims, width, cap);
    m.synth_net = build_prior_decoder<T>(signal, cfg.dims, width, cap);
    m.task_net = build_task_net<T>(signal, classes, width);
    Rng rng(seed, 0x6d6f64656cULL);
    for (auto* s : m.stacks()) s->initialize(rng);
    return m;
}

/// Rebuilds an untrained model of the given spec (used when loading checkpoints).
template <typename T>
CompressiveNet<T> build_from_spec(const ModelSpec& spec) {
    const MeasurementConfig cfg{spec.measurement};
    if (spec.kind == ModelKind::prior)
        return build_prior<T>(spec.signal, cfg, spec.classes, 0, spec.width, spec.capacity);
    return build_mcl<T>(spec.signal, cfg, spec.classes, spec.kind, 0, spec.width, spec.capacity);
}

template <typename T>
ModeProjection<T>& sensing_layer(MclModel<T>& m) {
    return static_cast<ModeProjection<T>&>(m.sense_net.layer(0));
}

/// Sets Phi_k to the leading HOSVD factors of the samples and, for a multilinear
/// synthesis network, Theta_k to Phi_k^T. Other layers are left alone.
template <typename T>
void hosvd_init(MclModel<T>& m, std::span<const Tensor<T>> samples) {
    if (samples.empty()) throw ConfigError("hosvd_init: empty sample list");
    for (const auto& s : samples)
        if (s.shape() != m.spec.signal)
            throw ShapeError("hosvd_init: sample shape " + shape_string(s.shape()) + " does not match signal " +
                             shape_string(m.spec.signal));
    const std::vector<Matrix<T>> phi = hosvd_factors(samples, m.spec.measurement);
    auto& e = sensing_layer(m);
    for (std::size_t k = 0; k < phi.size(); ++k) e.set_factor(k, phi[k]);
    if (m.spec.kind == ModelKind::mcl_multilinear) {
        auto& d = static_cast<ModeProjection<T>&>(m.synth_net.layer(0));
        for (std::size_t k = 0; k < phi.size(); ++k) d.set_factor(k, phi[k].transpose());
    }
}

template <typename T>
void hosvd_init(MclModel<T>& m, const std::vector<Tensor<T>>& samples) {
    hosvd_init(m, std::span<const Tensor<T>>(samples));
}

template <typename T>
Tensor<T> sense(const CompressiveNet<T>& m, const Tensor<T>& x) {
    return m.sense_net.infer(x);
}

template <typename T>
Tensor<T> synthesize(const CompressiveNet<T>& m, const Tensor<T>& z) {
    return m.synth_net.infer(z);
}

/// softmax(N(D(E(x)))).
template <typename T>
Tensor<T> predict(const CompressiveNet<T>& m, const Tensor<T>& x) {
    return softmax(m.logits(x));
}

/// Index of the largest entry; the lowest index wins ties.
template <typename T>
std::size_t argmax(const Tensor<T>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace mclkit
