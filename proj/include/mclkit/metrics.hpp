#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mclkit/models.hpp"
#include "mclkit/sample_set.hpp"

namespace mclkit {

template <typename T>
Tensor<T> chain_infer(std::span<const LayerStack<T>* const> stacks, const Tensor<T>& x) {
    Tensor<T> h = x;
    for (const LayerStack<T>* s : stacks) h = s->infer(h);
    return h;
}

/// Argmax accuracy of the composed stacks; ties go to the lowest class index.
template <typename T>
double chain_accuracy(std::span<const LayerStack<T>* const> stacks, const SampleSet<T>& set) {
    if (set.empty()) throw ConfigError("accuracy: empty evaluation set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set.labels[i] == kUnlabeled) throw ConfigError("accuracy: evaluation set contains unlabeled samples");
        if (static_cast<int>(argmax(chain_infer(stacks, set.samples[i]))) == set.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(set.size());
}

template <typename T>
double accuracy(const CompressiveNet<T>& m, const SampleSet<T>& set) {
    const std::vector<const LayerStack<T>*> stacks = m.stacks();
    return chain_accuracy(std::span<const LayerStack<T>* const>(stacks), set);
}

}  // namespace mclkit
