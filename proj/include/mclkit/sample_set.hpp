#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mclkit/tensor.hpp"

namespace mclkit {

inline constexpr int kUnlabeled = -1;

/// Samples of one shared shape with optional labels (kUnlabeled marks a withheld label).
template <typename T>
struct SampleSet {
    Shape shape;
    std::size_t classes = 0;
    std::vector<Tensor<T>> samples;
    std::vector<int> labels;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }

    void add(Tensor<T> x, int label) {
        if (x.shape() != shape)
            throw ShapeError("sample set: sample shape " + shape_string(x.shape()) + " differs from " +
                             shape_string(shape));
        samples.push_back(std::move(x));
        labels.push_back(label);
    }

    SampleSet subset(std::span<const std::size_t> indices) const {
        SampleSet out{shape, classes, {}, {}};
        out.samples.reserve(indices.size());
        out.labels.reserve(indices.size());
        for (std::size_t i : indices) {
            out.samples.push_back(samples.at(i));
            out.labels.push_back(labels.at(i));
        }
        return out;
    }

    SampleSet without_labels() const {
        SampleSet out = *this;
        for (int& l : out.labels) l = kUnlabeled;
        return out;
    }

    /// Appends all of `other` (same shape) after the current samples.
    void append(const SampleSet& other) {
        for (std::size_t i = 0; i < other.size(); ++i) add(other.samples[i], other.labels[i]);
    }

    template <typename U>
    SampleSet<U> cast() const {
        SampleSet<U> out{shape, classes, {}, labels};
        out.samples.reserve(samples.size());
        for (const auto& s : samples) out.samples.push_back(s.template cast<U>());
        return out;
    }
};

}  // namespace mclkit
