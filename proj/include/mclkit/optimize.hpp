#pragma once

// Training configuration, Adam, the max-norm constraint and image augmentation.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mclkit/layers.hpp"
#include "mclkit/rng.hpp"

namespace mclkit {

struct TrainConfig {
    std::size_t epochs = 60;
    std::vector<double> lr_values{1e-3, 1e-4, 1e-5};
    std::vector<std::size_t> lr_switch{30, 45};
    std::size_t batch_size = 32;
    double max_norm = 6.0;
    bool flip = true;
    double shift_fraction = 0.1;
    std::uint64_t seed = 0;
    double lambda = 1.0;                  // distillation weight
    double rho = 0.9;                     // self-labeling confidence threshold
    std::size_t epochs_per_round = 5;     // T in the self-labeling loop
    std::size_t round_cap = 50;
    std::size_t threads = 0;              // 0: hardware concurrency capped by MCLKIT_THREADS

    /// 160 epochs, learning rate 1e-3 / 1e-4 / 1e-5 switching at epochs 80 and 120.
    static TrainConfig paper() {
        TrainConfig c;
        c.epochs = 160;
        c.lr_switch = {80, 120};
        return c;
    }

    /// Desk-scale default: 60 epochs switching at 30 and 45.
    static TrainConfig desk() { return TrainConfig{}; }

    double lr_at(std::size_t epoch) const {
        std::size_t stage = 0;
        while (stage < lr_switch.size() && epoch >= lr_switch[stage]) ++stage;
        return lr_values.at(stage);
    }

    /// With `schedule_bound` unset the switch epochs may exceed `epochs` (used when a
    /// schedule is consumed in slices, as in the self-labeling rounds).
    void validate(bool schedule_bound = true) const {
        if (epochs == 0) throw ConfigError("epochs must be positive");
        if (lr_values.size() != lr_switch.size() + 1)
            throw ConfigError("learning-rate schedule needs exactly one more value than switch epochs");
        for (double v : lr_values)
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("learning rates must be positive");
        for (std::size_t i = 0; i < lr_switch.size(); ++i) {
            if (i && lr_switch[i] <= lr_switch[i - 1])
                throw ConfigError("learning-rate switch epochs must be strictly increasing");
            if (schedule_bound && lr_switch[i] >= epochs) throw ConfigError("learning-rate switch epochs must be below the epoch total");
        }
        if (batch_size == 0) throw ConfigError("batch size must be positive");
        if (!(max_norm > 0.0)) throw ConfigError("max-norm bound must be positive");
        if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
        if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
        if (epochs_per_round == 0) throw ConfigError("epochs per self-labeling round must be at least 1");
        if (round_cap == 0) throw ConfigError("round cap must be at least 1");
        if (!(shift_fraction >= 0.0 && shift_fraction < 1.0)) throw ConfigError("shift fraction must lie in [0, 1)");
    }
};

template <typename T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::vector<Tensor<T>> first;
    std::vector<Tensor<T>> second;
};

/// Bias-corrected Adam update of every parameter in place from its accumulated gradient.
template <typename T>
void adam_step(std::span<Param<T>* const> params, AdamState<T>& state, double lr) {
    if (state.first.empty() && state.step == 0) {
        for (const Param<T>* p : params) {
            state.first.emplace_back(p->value.shape());
            state.second.emplace_back(p->value.shape());
        }
    }
    if (state.first.size() != params.size())
        throw ShapeError("adam: state holds " + std::to_string(state.first.size()) + " moments for " +
                         std::to_string(params.size()) + " parameters");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (state.first[i].shape() != params[i]->value.shape() || params[i]->grad.shape() != params[i]->value.shape())
            throw ShapeError("adam: moment/gradient shape mismatch for parameter " + params[i]->name);

    ++state.step;
    const double t = static_cast<double>(state.step);
    const T b1 = static_cast<T>(state.beta1);
    const T b2 = static_cast<T>(state.beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(state.beta1, t));
    const T bc2 = static_cast<T>(1.0 - std::pow(state.beta2, t));
    const T eps = static_cast<T>(state.epsilon);
    const T rate = static_cast<T>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i]->value.values();
        const auto& grad = params[i]->grad.values();
        auto& m = state.first[i].values();
        auto& v = state.second[i].values();
        for (std::size_t j = 0; j < value.size(); ++j) {
            const T g = grad[j];
            m[j] = b1 * m[j] + (T{1} - b1) * g;
            v[j] = b2 * v[j] + (T{1} - b2) * g * g;
            const T m_hat = m[j] / bc1;
            const T v_hat = v[j] / bc2;
            value[j] -= rate * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

template <typename T>
void adam_step(const std::vector<Param<T>*>& params, AdamState<T>& state, double lr) {
    adam_step(std::span<Param<T>* const>(params), state, lr);
}

/// Rescales every constrained unit (dense row, conv filter, projection row) whose l2 norm
/// exceeds `bound` back onto the ball of radius `bound`. Units inside the ball are untouched.
template <typename T>
void max_norm_project(std::span<Param<T>* const> params, double bound) {
    if (!(bound > 0.0)) throw ConfigError("max-norm bound must be positive");
    for (Param<T>* p : params) {
        if (p->group == NormGroup::none) continue;
        auto& v = p->value.values();
        const std::size_t last = p->value.shape().back();
        const std::size_t lead = v.size() / last;
        const bool by_rows = p->group == NormGroup::rows;
        const std::size_t units = by_rows ? lead : last;
        const std::size_t len = by_rows ? last : lead;
        auto at = [&](std::size_t unit, std::size_t i) -> T& {
            return by_rows ? v[unit * last + i] : v[i * last + unit];
        };
        for (std::size_t u = 0; u < units; ++u) {
            double sq = 0.0;
            for (std::size_t i = 0; i < len; ++i) sq += static_cast<double>(at(u, i)) * static_cast<double>(at(u, i));
            const double norm = std::sqrt(sq);
            if (norm > bound) {
                const double scale = bound / norm;
                for (std::size_t i = 0; i < len; ++i) at(u, i) = static_cast<T>(static_cast<double>(at(u, i)) * scale);
            }
        }
    }
}

template <typename T>
void max_norm_project(const std::vector<Param<T>*>& params, double bound) {
    max_norm_project(std::span<Param<T>* const>(params), bound);
}

/// Largest l2 norm over all constrained units.
template <typename T>
double max_constrained_norm(std::span<const Param<T>* const> params) {
    double worst = 0.0;
    for (const Param<T>* p : params) {
        if (p->group == NormGroup::none) continue;
        const auto& v = p->value.values();
        const std::size_t last = p->value.shape().back();
        const std::size_t lead = v.size() / last;
        const bool by_rows = p->group == NormGroup::rows;
        const std::size_t units = by_rows ? lead : last;
        const std::size_t len = by_rows ? last : lead;
        for (std::size_t u = 0; u < units; ++u) {
            double sq = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
                const double x = by_rows ? v[u * last + i] : v[i * last + u];
                sq += x * x;
            }
            worst = std::max(worst, std::sqrt(sq));
        }
    }
    return worst;
}

struct AugmentFlags {
    bool flip = false;
    double shift_fraction = 0.0;

    bool active() const noexcept { return flip || shift_fraction > 0.0; }
    static AugmentFlags from(const TrainConfig& cfg) { return {cfg.flip, cfg.shift_fraction}; }
};

/// Mirrors an H x W x C image along its width.
template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("flip_horizontal: expected an HxWxC image, got " + shape_string(x.shape()));
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor<T> y(x.shape());
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t col = 0; col < w; ++col)
            for (std::size_t k = 0; k < c; ++k) y[(r * w + col) * c + k] = x[(r * w + (w - 1 - col)) * c + k];
    return y;
}

/// Moves image content by (dy, dx) pixels; vacated pixels are zero.
template <typename T>
Tensor<T> shift_image(const Tensor<T>& x, long dy, long dx) {
    if (x.rank() != 3) throw ShapeError("shift_image: expected an HxWxC image, got " + shape_string(x.shape()));
    const long h = static_cast<long>(x.dim(0)), w = static_cast<long>(x.dim(1));
    const std::size_t c = x.dim(2);
    Tensor<T> y(x.shape());
    for (long r = 0; r < h; ++r) {
        const long sr = r - dy;
        if (sr < 0 || sr >= h) continue;
        for (long col = 0; col < w; ++col) {
            const long sc = col - dx;
            if (sc < 0 || sc >= w) continue;
            for (std::size_t k = 0; k < c; ++k)
                y[(static_cast<std::size_t>(r) * static_cast<std::size_t>(w) + static_cast<std::size_t>(col)) * c + k] =
                    x[(static_cast<std::size_t>(sr) * static_cast<std::size_t>(w) + static_cast<std::size_t>(sc)) * c + k];
        }
    }
    return y;
}

/// Per-sample random horizontal flip (p = 0.5) then a random integer shift within
/// +-floor(fraction * dim) along each spatial mode. Labels are not involved.
template <typename T>
std::vector<Tensor<T>> augment(std::span<const Tensor<T>> batch, const AugmentFlags& flags, Rng& rng) {
    std::vector<Tensor<T>> out;
    out.reserve(batch.size());
    for (const Tensor<T>& x : batch) {
        if (!flags.active()) {
            out.push_back(x);
            continue;
        }
        if (x.rank() != 3) throw ConfigError("augment: augmentation needs HxWxC samples, got " + shape_string(x.shape()));
        Tensor<T> y = x;
        if (flags.flip && rng.coin()) y = flip_horizontal(y);
        if (flags.shift_fraction > 0.0) {
            const long max_dy = static_cast<long>(std::floor(flags.shift_fraction * static_cast<double>(x.dim(0))));
            const long max_dx = static_cast<long>(std::floor(flags.shift_fraction * static_cast<double>(x.dim(1))));
            const long dy = rng.between(-max_dy, max_dy);
            const long dx = rng.between(-max_dx, max_dx);
            if (dy != 0 || dx != 0) y = shift_image(y, dy, dx);
        }
        out.push_back(std::move(y));
    }
    return out;
}

}  // namespace mclkit
