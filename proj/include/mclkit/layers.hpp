#pragma once

// Differentiable layers over single samples. Image-like tensors are laid out
// H x W x C (channels fastest), which is also the natural I_1 x I_2 x I_3 signal
// layout used by the mode-projection layer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mclkit/rng.hpp"
#include "mclkit/tensor.hpp"

namespace mclkit {

enum class LayerKind { dense, conv2d, relu, maxpool2, upsample2, mode_projection, global_avg_pool, flatten };

inline const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2: return "maxpool2";
        case LayerKind::upsample2: return "upsample2";
        case LayerKind::mode_projection: return "mode-projection";
        case LayerKind::global_avg_pool: return "global-avg-pool";
        case LayerKind::flatten: return "flatten";
    }
    return "?";
}

/// How a parameter is split into units for the max-norm constraint.
enum class NormGroup {
    none,     // exempt (biases)
    rows,     // each slice along the last dimension is one unit (dense rows, projection rows)
    columns,  // value viewed as (size / last) x last; each column is one unit (conv filters)
};

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    NormGroup group = NormGroup::none;

    Param(std::string n, Shape shape, NormGroup g) : name(std::move(n)), value(shape), grad(shape), group(g) {}
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const noexcept = 0;
    /// Validates an input shape and returns the output shape; throws ShapeError.
    virtual Shape output_shape(const Shape& in) const = 0;
    /// Pure evaluation; never touches cached state, safe to call concurrently.
    virtual Tensor<T> infer(const Tensor<T>& x) const = 0;
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual void initialize(Rng&) {}
    virtual std::vector<Param<T>*> params() { return {}; }

    std::vector<const Param<T>*> const_params() const {
        auto ps = const_cast<Layer*>(this)->params();
        return {ps.begin(), ps.end()};
    }

    /// With `training` set, the input is cached for the next backward().
    Tensor<T> forward(const Tensor<T>& x, bool training) {
        Tensor<T> y = infer(x);
        if (training) cached_input_ = x;
        return y;
    }

    /// Accumulates parameter gradients and returns the input gradient. Consumes the cache.
    Tensor<T> backward(const Tensor<T>& grad_out) {
        if (!cached_input_)
            throw StateError(std::string(to_string(kind())) + " layer: backward called without a cached forward");
        const Shape expected = output_shape(cached_input_->shape());
        if (grad_out.shape() != expected)
            throw ShapeError(std::string(to_string(kind())) + " layer: output gradient shape " +
                             shape_string(grad_out.shape()) + " does not match output " + shape_string(expected));
        Tensor<T> gx = backward_impl(*cached_input_, grad_out);
        cached_input_.reset();
        return gx;
    }

    bool has_cache() const noexcept { return cached_input_.has_value(); }

protected:
    Layer() = default;
    Layer(const Layer&) : cached_input_() {}
    Layer& operator=(const Layer&) = delete;

    virtual Tensor<T> backward_impl(const Tensor<T>& x, const Tensor<T>& grad_out) = 0;

private:
    std::optional<Tensor<T>> cached_input_;
};

namespace detail {

[[noreturn]] inline void bad_input(LayerKind kind, const std::string& expected, const Shape& got) {
    throw ShapeError(std::string(to_string(kind)) + ": expected input " + expected + ", got " + shape_string(got));
}

template <typename T>
void glorot_fill(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace detail

/// y = W x + b on a rank-1 input.
template <typename T>
class Dense final : public Layer<T> {
public:
    Dense(std::size_t in, std::size_t out)
        : in_(in), out_(out), weight_("weight", {out, in}, NormGroup::rows), bias_("bias", {out}, NormGroup::none) {}

    LayerKind kind() const noexcept override { return LayerKind::dense; }
    std::size_t in_features() const noexcept { return in_; }
    std::size_t out_features() const noexcept { return out_; }

    Shape output_shape(const Shape& in) const override {
        if (in != Shape{in_}) detail::bad_input(kind(), shape_string({in_}), in);
        return {out_};
    }

    Tensor<T> infer(const Tensor<T>& x) const override {
        output_shape(x.shape());
        Tensor<T> y({out_});
        const T* w = weight_.value.data().data();
        for (std::size_t o = 0; o < out_; ++o) {
            T acc = bias_.value[o];
            const T* row = w + o * in_;
            for (std::size_t i = 0; i < in_; ++i) acc += row[i] * x[i];
            y[o] = acc;
        }
        return y;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }
    void initialize(Rng& rng) override {
        detail::glorot_fill(weight_.value, in_, out_, rng);
        bias_.value.fill(T{0});
    }
    std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

protected:
    Tensor<T> backward_impl(const Tensor<T>& x, const Tensor<T>& g) override {
        Tensor<T> gx({in_});
        const T* w = weight_.value.data().data();
        T* gw = weight_.grad.data().data();
        for (std::size_t o = 0; o < out_; ++o) {
            const T go = g[o];
            bias_.grad[o] += go;
            for (std::size_t i = 0; i < in_; ++i) {
                gw[o * in_ + i] += go * x[i];
                gx[i] += w[o * in_ + i] * go;
            }
        }
        return gx;
    }

private:
    std::size_t in_, out_;
    Param<T> weight_, bias_;
};

/// k x k convolution, stride 1, zero "same" padding. Weight layout (k, k, C_in, C_out);
/// each output filter is one column of the (k*k*C_in) x C_out view.
template <typename T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel = 3)
        : cin_(in_channels),
          cout_(out_channels),
          k_(kernel),
          weight_("weight", {kernel, kernel, in_channels, out_channels}, NormGroup::columns),
          bias_("bias", {out_channels}, NormGroup::none) {
        if (kernel % 2 == 0) throw ConfigError("conv2d: kernel size must be odd for same padding");
    }

    LayerKind kind() const noexcept override { return LayerKind::conv2d; }
    std::size_t in_channels() const noexcept { return cin_; }
    std::size_t out_channels() const noexcept { return cout_; }

    Shape output_shape(const Shape& in) const override {
        if (in.size() != 3 || in[2] != cin_) detail::bad_input(kind(), "HxWx" + std::to_string(cin_), in);
        return {in[0], in[1], cout_};
    }

    Tensor<T> infer(const Tensor<T>& x) const override {
        const Shape out_shape = output_shape(x.shape());
        const std::size_t h = out_shape[0], w = out_shape[1];
        const long pad = static_cast<long>(k_ / 2);
        Tensor<T> y(out_shape);
        const T* in = x.data().data();
        const T* wt = weight_.value.data().data();
        T* out = y.data().data();
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                T* o = out + (r * w + c) * cout_;
                for (std::size_t co = 0; co < cout_; ++co) o[co] = bias_.value[co];
                for (std::size_t ky = 0; ky < k_; ++ky) {
                    const long ir = static_cast<long>(r) + static_cast<long>(ky) - pad;
                    if (ir < 0 || ir >= static_cast<long>(h)) continue;
                    for (std::size_t kx = 0; kx < k_; ++kx) {
                        const long ic = static_cast<long>(c) + static_cast<long>(kx) - pad;
                        if (ic < 0 || ic >= static_cast<long>(w)) continue;
                        const T* px = in + (static_cast<std::size_t>(ir) * w + static_cast<std::size_t>(ic)) * cin_;
                        const T* wk = wt + (ky * k_ + kx) * cin_ * cout_;
                        for (std::size_t ci = 0; ci < cin_; ++ci) {
                            const T v = px[ci];
                            const T* wrow = wk + ci * cout_;
                            for (std::size_t co = 0; co < cout_; ++co) o[co] += v * wrow[co];
                        }
                    }
                }
            }
        return y;
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }
    void initialize(Rng& rng) override {
        detail::glorot_fill(weight_.value, k_ * k_ * cin_, k_ * k_ * cout_, rng);
        bias_.value.fill(T{0});
    }
    std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

protected:
    Tensor<T> backward_impl(const Tensor<T>& x, const Tensor<T>& g) override {
        const std::size_t h = x.dim(0), w = x.dim(1);
        const long pad = static_cast<long>(k_ / 2);
        Tensor<T> gx(x.shape());
        const T* in = x.data().data();
        const T* wt = weight_.value.data().data();
        const T* go = g.data().data();
        T* gw = weight_.grad.data().data();
        T* gi = gx.data().data();
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const T* gpix = go + (r * w + c) * cout_;
                for (std::size_t co = 0; co < cout_; ++co) bias_.grad[co] += gpix[co];
                for (std::size_t ky = 0; ky < k_; ++ky) {
                    const long ir = static_cast<long>(r) + static_cast<long>(ky) - pad;
                    if (ir < 0 || ir >= static_cast<long>(h)) continue;
                    for (std::size_t kx = 0; kx < k_; ++kx) {
                        const long ic = static_cast<long>(c) + static_cast<long>(kx) - pad;
                        if (ic < 0 || ic >= static_cast<long>(w)) continue;
                        const std::size_t pix = static_cast<std::size_t>(ir) * w + static_cast<std::size_t>(ic);
                        const T* px = in + pix * cin_;
                        T* gpx = gi + pix * cin_;
                        const std::size_t base = (ky * k_ + kx) * cin_ * cout_;
                        for (std::size_t ci = 0; ci < cin_; ++ci) {
                            const T v = px[ci];
                            const T* wrow = wt + base + ci * cout_;
                            T* gwrow = gw + base + ci * cout_;
                            T acc{0};
                            for (std::size_t co = 0; co < cout_; ++co) {
                                gwrow[co] += v * gpix[co];
                                acc += wrow[co] * gpix[co];
                            }
                            gpx[ci] += acc;
                        }
                    }
                }
            }
        return gx;
    }

private:
    std::size_t cin_, cout_, k_;
    Param<T> weight_, bias_;
};

template <typename T>
class Relu final : public Layer<T> {
public:
    LayerKind kind() const noexcept override { return LayerKind::relu; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor<T> infer(const Tensor<T>& x) const override {
        Tensor<T> y = x;
        for (auto& v : y.values()) v = v > T{0} ? v : T{0};
        return y;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Relu>(*this); }

protected:
    Tensor<T> backward_impl(const Tensor<T>& x, const Tensor<T>& g) override {
        Tensor<T> gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (!(x[i] > T{0})) gx[i] = T{0};
        return gx;
    }
};

/// 2x2 max pooling with stride 2 over the two spatial modes (odd trailing rows/cols dropped).
template <typename T>
class MaxPool2 final : public Layer<T> {
public:
    LayerKind kind() const noexcept override { return LayerKind::maxpool2; }
    Shape output_shape(const Shape& in) const override {
        if (in.size() != 3 || in[0] < 2 || in[1] < 2) detail::bad_input(kind(), "HxWxC with H,W >= 2", in);
        return {in[0] / 2, in[1] / 2, in[2]};
    }
    Tensor<T> infer(const Tensor<T>& x) const override {
        const Shape os = output_shape(x.shape());
        Tensor<T> y(os);
        const std::size_t w = x.dim(1), ch = x.dim(2);
        for (std::size_t r = 0; r < os[0]; ++r)
            for (std::size_t c = 0; c < os[1]; ++c)
                for (std::size_t k = 0; k < ch; ++k) y[(r * os[1] + c) * ch + k] = x[argmax(x, w, ch, r, c, k)];
        return y;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool2>(*this); }

protected:
    Tensor<T> backward_impl(const Tensor<T>& x, const Tensor<T>& g) override {
        Tensor<T> gx(x.shape());
        const std::size_t w = x.dim(1), ch = x.dim(2);
        const std::size_t oh = g.dim(0), ow = g.dim(1);
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t c = 0; c < ow; ++c)
                for (std::size_t k = 0; k < ch; ++k) gx[argmax(x, w, ch, r, c, k)] += g[(r * ow + c) * ch + k];
        return gx;
    }

private:
    // First maximum in scan order wins ties.
    static std::size_t argmax(const Tensor<T>& x, std::size_t w, std::size_t ch, std::size_t r, std::size_t c,
                              std::size_t k) {
        std::size_t best = ((2 * r) * w + 2 * c) * ch + k;
        for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = ((2 * r + dy) * w + 2 * c + dx) * ch + k;
                if (x[idx] > x[best]) best = idx;
            }
        return best;
    }
};

/// 2x nearest-neighbour upsampling over the two spatial modes.
template <typename T>
class Upsample2 final : public Layer<T> {
public:
    LayerKind kind() const noexcept override { return LayerKind::upsample2; }
    Shape output_shape(const Shape& in) const override {
        if (in.size() != 3) detail::bad_input(kind(), "HxWxC", in);
        return {in[0] * 2, in[1] * 2, in[2]};
    }
    Tensor<T> infer(const Tensor<T>& x) const override {
        const Shape os = output_shape(x.shape());
        Tensor<T> y(os);
        const std::size_t w = x.dim(1), ch = x.dim(2);
        for (std::size_t r = 0; r < os[0]; ++r)
            for (std::size_t c = 0; c < os[1]; ++c)
                for (std::size_t k = 0; k < ch; ++k) y[(r * os[1] + c) * ch + k] = x[((r / 2) * w + c / 2) * ch + k];
        return y;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Upsample2>(*this); }

protected:
    Tensor<T> backward_impl(const Tensor<T>& x, const Tensor<T>& g) override {
        Tensor<T> gx(x.shape());
        const std::size_t w = x.dim(1), ch = x.dim(2);
        const std::size_t oh = g.dim(0), ow = g.dim(1);
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t c = 0; c < ow; ++c)
                for (std::size_t k = 0; k < ch; ++k) gx[((r / 2) * w + c / 2) * ch + k] += g[(r * ow + c) * ch + k];
        return gx;
    }
};

/// Separable multilinear map y = x x_0 F_0 x_1 F_1 ... x_{K-1} F_{K-1}; houses sensing
/// factors (M_k x I_k) or synthesis factors (I_k x M_k).
template <typename T>
class ModeProjection final : public Layer<T> {
public:
    /// `in_dims[k]` -> `out_dims[k]` for every mode k.
    ModeProjection(const Shape& in_dims, const Shape& out_dims) : in_(in_dims), out_(out_dims) {
        if (in_dims.size() != out_dims.size()) throw ConfigError("mode-projection: input/output rank differ");
        for (std::size_t k = 0; k < in_dims.size(); ++k)
            factors_.emplace_back("factor" + std::to_string(k), Shape{out_dims[k], in_dims[k]}, NormGroup::rows);
    }

    LayerKind kind() const noexcept override { return LayerKind::mode_projection; }
    const Shape& in_dims() const noexcept { return in_; }
    const Shape& out_dims() const noexcept { return out_; }

    Shape output_shape(const Shape& in) const override {
        if (in != in_) detail::bad_input(kind(), shape_string(in_), in);
        return out_;
    }

    Tensor<T> infer(const Tensor<T>& x) const override {
        output_shape(x.shape());
        return multi_mode_product(x, factor_matrices());
    }

    std::vector<Matrix<T>> factor_matrices() const {
        std::vector<Matrix<T>> ms;
        ms.reserve(factors_.size());
        for (std::size_t k = 0; k < factors_.size(); ++k) ms.emplace_back(out_[k], in_[k], factors_[k].value.values());
        return ms;
    }

    void set_factor(std::size_t k, const Matrix<T>& m) {
        if (m.rows() != out_.at(k) || m.cols() != in_.at(k))
            throw ShapeError("mode-projection: factor " + std::to_string(k) + " must be " + std::to_string(out_[k]) +
                             "x" + std::to_string(in_[k]));
        factors_[k].value.values() = m.values();
    }

    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ModeProjection>(*this); }
    void initialize(Rng& rng) override {
        for (std::size_t k = 0; k < factors_.size(); ++k) detail::glorot_fill(factors_[k].value, in_[k], out_[k], rng);
    }
    std::vector<Param<T>*> params() override {
        std::vector<Param<T>*> ps;
        for (auto& f : factors_) ps.push_back(&f);
        return ps;
    }

protected:
    Tensor<T> backward_impl(const Tensor<T>& x, const Tensor<T>& g) override {
        const std::vector<Matrix<T>> ws = factor_matrices();
        std::vector<Matrix<T>> wts;
        for (const auto& w : ws) wts.push_back(w.transpose());
        // dL/dF_k = unfold_k(g) * unfold_k(x projected by every other factor)^T
        for (std::size_t k = 0; k < ws.size(); ++k) {
            Tensor<T> partial = x;
            for (std::size_t j = 0; j < ws.size(); ++j)
                if (j != k) partial = mode_k_product(partial, ws[j], j);
            const Matrix<T> gk = mode_k_unfold(g, k);
            const Matrix<T> pk = mode_k_unfold(partial, k);
            T* grad = factors_[k].grad.data().data();
            for (std::size_t r = 0; r < gk.rows(); ++r)
                for (std::size_t c = 0; c < pk.rows(); ++c) {
                    T acc{0};
                    for (std::size_t q = 0; q < gk.cols(); ++q) acc += gk(r, q) * pk(c, q);
                    grad[r * pk.rows() + c] += acc;
                }
        }
        return multi_mode_product(g, wts);
    }

private:
    Shape in_, out_;
    std::vector<Param<T>> factors_;
};

/// H x W x C -> C by averaging over the spatial modes.
template <typename T>
class GlobalAvgPool final : public Layer<T> {
public:
    LayerKind kind() const noexcept override { return LayerKind::global_avg_pool; }
    Shape output_shape(const Shape& in) const override {
        if (in.size() != 3) detail::bad_input(kind(), "HxWxC", in);
        return {in[2]};
    }
    Tensor<T> infer(const Tensor<T>& x) const override {
        const Shape os = output_shape(x.shape());
        const std::size_t pixels = x.dim(0) * x.dim(1), ch = x.dim(2);
        Tensor<T> y(os);
        for (std::size_t p = 0; p < pixels; ++p)
            for (std::size_t k = 0; k < ch; ++k) y[k] += x[p * ch + k];
        const T scale = T{1} / static_cast<T>(pixels);
        for (auto& v : y.values()) v *= scale;
        return y;
    }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

protected:
    Tensor<T> backward_impl(const Tensor<T>& x, const Tensor<T>& g) override {
        Tensor<T> gx(x.shape());
        const std::size_t pixels = x.dim(0) * x.dim(1), ch = x.dim(2);
        const T scale = T{1} / static_cast<T>(pixels);
        for (std::size_t p = 0; p < pixels; ++p)
            for (std::size_t k = 0; k < ch; ++k) gx[p * ch + k] = g[k] * scale;
        return gx;
    }
};

template <typename T>
class Flatten final : public Layer<T> {
public:
    LayerKind kind() const noexcept override { return LayerKind::flatten; }
    Shape output_shape(const Shape& in) const override { return {shape_size(in)}; }
    Tensor<T> infer(const Tensor<T>& x) const override { return Tensor<T>({x.size()}, x.values()); }
    std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Flatten>(*this); }

protected:
    Tensor<T> backward_impl(const Tensor<T>& x, const Tensor<T>& g) override {
        return Tensor<T>(x.shape(), g.values());
    }
};

}  // namespace mclkit
