#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "mclkit/losses.hpp"
#include "mclkit/stack.hpp"

namespace mclkit {

enum class LossKind { l1, cross_entropy, symmetric_kl };

/// Target for a gradient check: a tensor (l1 target or reference logits) or a class label.
struct GradCheckTarget {
    Tensor<double> tensor;
    std::size_t label = 0;
};

struct GradCheckOptions {
    double step = 1e-5;
    // Relative errors are measured against max(|analytic|, |numeric|, floor) so that
    // gradients that are zero up to rounding are compared absolutely.
    double floor = 1e-6;
    bool include_input = true;
};

namespace detail {

inline LossResult<double> evaluate_loss(LossKind kind, const Tensor<double>& out, const GradCheckTarget& target) {
    switch (kind) {
        case LossKind::l1: {
            auto r = l1_loss(out, target.tensor);
            return {r.loss, std::move(r.grad_a)};
        }
        case LossKind::cross_entropy: return cross_entropy(out, target.label);
        case LossKind::symmetric_kl: {
            auto r = symmetric_kl(out, target.tensor);
            return {r.loss, std::move(r.grad_a)};
        }
    }
    throw ConfigError("unknown loss kind");
}

inline double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

}  // namespace detail

/// Worst relative error between backpropagated and central-difference gradients over
/// every parameter element (and the input, unless disabled).
inline double grad_check(LayerStack<double>& stack, LossKind kind, const Tensor<double>& input,
                         const GradCheckTarget& target, const GradCheckOptions& opt = {}) {
    stack.zero_grad();
    const Tensor<double> out = stack.forward(input, true);
    const LossResult<double> lr = detail::evaluate_loss(kind, out, target);
    const Tensor<double> grad_input = stack.backward(lr.grad);

    auto loss_at = [&](const Tensor<double>& x) { return detail::evaluate_loss(kind, stack.infer(x), target).loss; };

    double worst = 0.0;
    for (Param<double>* p : stack.params()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value[i];
            p->value[i] = saved + opt.step;
            const double up = loss_at(input);
            p->value[i] = saved - opt.step;
            const double down = loss_at(input);
            p->value[i] = saved;
            const double numeric = (up - down) / (2.0 * opt.step);
            worst = std::max(worst, detail::relative_error(p->grad[i], numeric, opt.floor));
        }
    }
    if (opt.include_input) {
        Tensor<double> x = input;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double saved = x[i];
            x[i] = saved + opt.step;
            const double up = loss_at(x);
            x[i] = saved - opt.step;
            const double down = loss_at(x);
            x[i] = saved;
            const double numeric = (up - down) / (2.0 * opt.step);
            worst = std::max(worst, detail::relative_error(grad_input[i], numeric, opt.floor));
        }
    }
    return worst;
}

}  // namespace mclkit
