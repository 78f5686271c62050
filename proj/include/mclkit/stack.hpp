#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mclkit/layers.hpp"

namespace mclkit {

/// Ordered sequence of layers with a declared input shape. Copying deep-copies
/// parameters and drops any cached activations.
template <typename T>
class LayerStack {
public:
    LayerStack() = default;
    explicit LayerStack(Shape input_shape) : input_shape_(std::move(input_shape)) {}

    LayerStack(const LayerStack& other) : input_shape_(other.input_shape_) {
        layers_.reserve(other.layers_.size());
        for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }
    LayerStack& operator=(const LayerStack& other) {
        if (this != &other) {
            LayerStack tmp(other);
            *this = std::move(tmp);
        }
        return *this;
    }
    LayerStack(LayerStack&&) noexcept = default;
    LayerStack& operator=(LayerStack&&) noexcept = default;

    /// Appends a layer; its input must accept the current output shape.
    template <typename L, typename... Args>
    L& add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        check_layer(*layer, layers_.size(), output_shape());
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    const Shape& input_shape() const noexcept { return input_shape_; }
    Shape output_shape() const {
        Shape s = input_shape_;
        for (const auto& l : layers_) s = l->output_shape(s);
        return s;
    }

    std::size_t size() const noexcept { return layers_.size(); }
    bool empty() const noexcept { return layers_.empty(); }
    Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
    const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

    void initialize(Rng& rng) {
        for (auto& l : layers_) l->initialize(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        check_input(x);
        Tensor<T> h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            check_layer(*layers_[i], i, h.shape());
            h = layers_[i]->forward(h, training);
        }
        if (training) primed_ = true;
        return h;
    }

    /// Read-only evaluation; thread-safe on a shared stack.
    Tensor<T> infer(const Tensor<T>& x) const {
        check_input(x);
        Tensor<T> h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            check_layer(*layers_[i], i, h.shape());
            h = layers_[i]->infer(h);
        }
        return h;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!primed_) throw StateError("layer stack: backward called without a cached training forward");
        primed_ = false;
        Tensor<T> g = grad_out;
        for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
        return g;
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> ps;
        for (auto& l : layers_)
            for (Param<T>* p : l->params()) ps.push_back(p);
        return ps;
    }
    std::vector<const Param<T>*> params() const {
        std::vector<const Param<T>*> ps;
        for (const auto& l : layers_)
            for (const Param<T>* p : l->const_params()) ps.push_back(p);
        return ps;
    }

    /// Parameter names of the form "<layer index>.<param name>".
    std::vector<std::string> param_names() const {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            for (const Param<T>* p : layers_[i]->const_params()) names.push_back(std::to_string(i) + "." + p->name);
        return names;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Param<T>* p : params()) n += p->value.size();
        return n;
    }

    void zero_grad() {
        for (Param<T>* p : params()) p->grad.fill(T{0});
    }

    /// Copies parameter values from a stack of identical structure.
    void copy_parameters_from(const LayerStack& other) {
        auto dst = params();
        auto src = other.params();
        if (!same_structure(other))
            throw ShapeError("layer stack: cannot copy parameters between stacks of different structure");
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value.values() = src[i]->value.values();
    }

    bool same_structure(const LayerStack& other) const {
        if (input_shape_ != other.input_shape_ || layers_.size() != other.layers_.size()) return false;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            if (layers_[i]->kind() != other.layers_[i]->kind()) return false;
        auto a = params();
        auto b = other.params();
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i]->value.shape() != b[i]->value.shape()) return false;
        return true;
    }

private:
    void check_input(const Tensor<T>& x) const {
        if (x.shape() != input_shape_)
            throw ShapeError("layer stack: input shape " + shape_string(x.shape()) + " does not match declared " +
                             shape_string(input_shape_));
    }

    static void check_layer(const Layer<T>& layer, std::size_t index, const Shape& in) {
        try {
            layer.output_shape(in);
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(index) + " (" + to_string(layer.kind()) +
                             "): " + e.what());
        }
    }

    Shape input_shape_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    bool primed_ = false;
};

}  // namespace mclkit
