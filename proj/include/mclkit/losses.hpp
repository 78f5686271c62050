#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "mclkit/tensor.hpp"

namespace mclkit {

template <typename T>
struct LossResult {
    double loss = 0.0;
    Tensor<T> grad;
};

template <typename T>
struct PairLossResult {
    double loss = 0.0;
    Tensor<T> grad_a;
    Tensor<T> grad_b;
};

/// Numerically stable softmax of a logit vector.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    Tensor<T> p = logits;
    const T m = *std::max_element(p.values().begin(), p.values().end());
    T sum{0};
    for (auto& v : p.values()) {
        v = std::exp(v - m);
        sum += v;
    }
    for (auto& v : p.values()) v /= sum;
    return p;
}

/// -log softmax(logits)[label]; gradient softmax(logits) - onehot(label).
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::size_t label) {
    if (label >= logits.size())
        throw ConfigError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                          std::to_string(logits.size()) + " classes");
    const T m = *std::max_element(logits.values().begin(), logits.values().end());
    T sum{0};
    for (T v : logits.values()) sum += std::exp(v - m);
    const T loss = std::log(sum) - (logits[label] - m);
    LossResult<T> out{static_cast<double>(loss), softmax(logits)};
    out.grad[label] -= T{1};
    return out;
}

inline constexpr double kKlClip = 1e-7;

/// KL(p||q) + KL(q||p) between softmax(p_logits) and softmax(q_logits), probabilities
/// clipped to [1e-7, 1]. Written as sum (p - q)(log p - log q) so swapping the
/// arguments gives the identical floating-point result.
template <typename T>
PairLossResult<T> symmetric_kl(const Tensor<T>& p_logits, const Tensor<T>& q_logits) {
    if (p_logits.size() != q_logits.size())
        throw ShapeError("symmetric_kl: logit lengths " + std::to_string(p_logits.size()) + " and " +
                         std::to_string(q_logits.size()) + " differ");
    const Tensor<T> p = softmax(p_logits);
    const Tensor<T> q = softmax(q_logits);
    const std::size_t n = p.size();
    const T lo = static_cast<T>(kKlClip);
    Tensor<T> dp(p.shape()), dq(q.shape());  // dL/dp, dL/dq on the clipped probabilities
    T loss{0};
    for (std::size_t i = 0; i < n; ++i) {
        const bool p_free = p[i] > lo;
        const bool q_free = q[i] > lo;
        const T pc = p_free ? p[i] : lo;
        const T qc = q_free ? q[i] : lo;
        const T log_ratio = std::log(pc) - std::log(qc);
        loss += (pc - qc) * log_ratio;
        if (p_free) dp[i] = log_ratio + T{1} - qc / pc;
        if (q_free) dq[i] = -log_ratio + T{1} - pc / qc;
    }
    // Chain through softmax: dz_j = s_j (g_j - sum_i s_i g_i).
    auto through_softmax = [n](const Tensor<T>& s, const Tensor<T>& g) {
        T dotp{0};
        for (std::size_t i = 0; i < n; ++i) dotp += s[i] * g[i];
        Tensor<T> dz(s.shape());
        for (std::size_t j = 0; j < n; ++j) dz[j] = s[j] * (g[j] - dotp);
        return dz;
    };
    return {static_cast<double>(loss), through_softmax(p, dp), through_softmax(q, dq)};
}

/// mean |a - b|; subgradient sign(a - b) / n with sign(0) = 0.
template <typename T>
PairLossResult<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("l1_loss: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                         " differ");
    const std::size_t n = a.size();
    const T inv = T{1} / static_cast<T>(n);
    Tensor<T> ga(a.shape()), gb(b.shape());
    T sum{0};
    for (std::size_t i = 0; i < n; ++i) {
        const T d = a[i] - b[i];
        sum += std::abs(d);
        const T s = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
        ga[i] = s * inv;
        gb[i] = -s * inv;
    }
    return {static_cast<double>(sum * inv), std::move(ga), std::move(gb)};
}

}  // namespace mclkit
