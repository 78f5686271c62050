#pragma once

// Dense row-major tensors and matrices plus the multilinear algebra built on them:
// mode-k products, unfolding, vectorization and Kronecker products.
//
// Index convention: modes are 0-based in this API. Storage is row-major (last index
// fastest), and vectorize() is the plain row-major flattening. With that ordering
//
//     vectorize(t x_0 W_0 x_1 W_1 ... x_{K-1} W_{K-1}) == (W_0 (x) W_1 (x) ... (x) W_{K-1}) vectorize(t)
//
// holds with the Kronecker factors in natural mode order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "mclkit/errors.hpp"

namespace mclkit {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), T{0}) { check_dims(); }
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_dims();
        if (data_.size() != shape_size(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t k) const { return shape_.at(k); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& values() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Row-major flat offset of a multi-index.
    std::size_t offset(std::span<const std::size_t> index) const {
        if (index.size() != shape_.size()) throw ShapeError("index rank does not match tensor rank");
        std::size_t off = 0;
        for (std::size_t k = 0; k < shape_.size(); ++k) {
            if (index[k] >= shape_[k]) throw ShapeError("index out of range in mode " + std::to_string(k));
            off = off * shape_[k] + index[k];
        }
        return off;
    }
    T& at(std::initializer_list<std::size_t> index) { return data_[offset(std::span(index.begin(), index.size()))]; }
    const T& at(std::initializer_list<std::size_t> index) const {
        return data_[offset(std::span(index.begin(), index.size()))];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    void check_dims() const {
        for (std::size_t d : shape_)
            if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{0}) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                             std::to_string(rows_) + "x" + std::to_string(cols_));
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& values() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }
    std::span<const T> row(std::size_t r) const { return std::span<const T>(data_).subspan(r * cols_, cols_); }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    template <typename U>
    Matrix<U> cast() const {
        return Matrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    Matrix<T> out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

template <typename T>
std::vector<T> matvec(const Matrix<T>& a, std::span<const T> x) {
    if (a.cols() != x.size()) throw ShapeError("matvec: column count does not match vector length");
    std::vector<T> y(a.rows(), T{0});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        T acc{0};
        for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

template <typename T>
Tensor<T> reshape(Tensor<T> t, Shape shape) {
    if (shape_size(shape) != t.size())
        throw ShapeError("reshape: " + shape_string(t.shape()) + " to " + shape_string(shape));
    return Tensor<T>(std::move(shape), std::move(t.values()));
}

/// Row-major flattening (last index fastest).
template <typename T>
std::vector<T> vectorize(const Tensor<T>& t) {
    return t.values();
}

namespace detail {

// Splits a shape around mode k into (product before k, I_k, product after k).
inline std::tuple<std::size_t, std::size_t, std::size_t> split_at_mode(const Shape& shape, std::size_t k) {
    std::size_t pre = 1;
    std::size_t post = 1;
    for (std::size_t i = 0; i < k; ++i) pre *= shape[i];
    for (std::size_t i = k + 1; i < shape.size(); ++i) post *= shape[i];
    return {pre, shape[k], post};
}

}  // namespace detail

/// out[.., j, ..] = sum_i w(j, i) * t[.., i, ..] along mode k.
template <typename T>
Tensor<T> mode_k_product(const Tensor<T>& t, const Matrix<T>& w, std::size_t k) {
    if (k >= t.rank())
        throw ShapeError("mode_k_product: mode " + std::to_string(k) + " out of range for rank " +
                         std::to_string(t.rank()));
    if (w.cols() != t.dim(k))
        throw ShapeError("mode_k_product: mode " + std::to_string(k) + " has size " + std::to_string(t.dim(k)) +
                         " but factor has " + std::to_string(w.cols()) + " columns");
    const auto [pre, in_dim, post] = detail::split_at_mode(t.shape(), k);
    Shape out_shape = t.shape();
    out_shape[k] = w.rows();
    Tensor<T> out(out_shape);
    const T* src = t.data().data();
    T* dst = out.data().data();
    const std::size_t out_dim = w.rows();
    for (std::size_t p = 0; p < pre; ++p) {
        const T* src_p = src + p * in_dim * post;
        T* dst_p = dst + p * out_dim * post;
        for (std::size_t j = 0; j < out_dim; ++j) {
            T* dst_row = dst_p + j * post;
            for (std::size_t i = 0; i < in_dim; ++i) {
                const T wji = w(j, i);
                const T* src_row = src_p + i * post;
                for (std::size_t q = 0; q < post; ++q) dst_row[q] += wji * src_row[q];
            }
        }
    }
    return out;
}

/// Applies ws[k] along every mode k, in increasing mode order.
template <typename T>
Tensor<T> multi_mode_product(const Tensor<T>& t, std::span<const Matrix<T>> ws) {
    if (ws.size() != t.rank())
        throw ShapeError("multi_mode_product: " + std::to_string(ws.size()) + " factors for a rank-" +
                         std::to_string(t.rank()) + " tensor");
    for (std::size_t k = 0; k < ws.size(); ++k)
        if (ws[k].cols() != t.dim(k))
            throw ShapeError("multi_mode_product: mode " + std::to_string(k) + " has size " +
                             std::to_string(t.dim(k)) + " but factor has " + std::to_string(ws[k].cols()) +
                             " columns");
    Tensor<T> out = t;
    for (std::size_t k = 0; k < ws.size(); ++k) out = mode_k_product(out, ws[k], k);
    return out;
}

template <typename T>
Tensor<T> multi_mode_product(const Tensor<T>& t, const std::vector<Matrix<T>>& ws) {
    return multi_mode_product(t, std::span<const Matrix<T>>(ws));
}

/// Same as multi_mode_product but applying the modes in the given order.
template <typename T>
Tensor<T> multi_mode_product_ordered(const Tensor<T>& t, const std::vector<Matrix<T>>& ws,
                                     std::span<const std::size_t> order) {
    if (ws.size() != t.rank() || order.size() != t.rank())
        throw ShapeError("multi_mode_product_ordered: factor/order count does not match rank");
    Tensor<T> out = t;
    for (std::size_t k : order) out = mode_k_product(out, ws.at(k), k);
    return out;
}

template <typename T>
Matrix<T> kron(const Matrix<T>& a, const Matrix<T>& b) {
    Matrix<T> out(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            for (std::size_t r = 0; r < b.rows(); ++r)
                for (std::size_t c = 0; c < b.cols(); ++c)
                    out(i * b.rows() + r, j * b.cols() + c) = a(i, j) * b(r, c);
    return out;
}

/// ws[0] (x) ws[1] (x) ... (x) ws[K-1]; matches the row-major vectorize() ordering.
template <typename T>
Matrix<T> kron_chain(std::span<const Matrix<T>> ws) {
    if (ws.empty()) return Matrix<T>::identity(1);
    Matrix<T> out = ws[0];
    for (std::size_t k = 1; k < ws.size(); ++k) out = kron(out, ws[k]);
    return out;
}

/// Mode-k unfolding: I_k rows; columns enumerate the remaining indices in row-major order.
template <typename T>
Matrix<T> mode_k_unfold(const Tensor<T>& t, std::size_t k) {
    if (k >= t.rank())
        throw ShapeError("mode_k_unfold: mode " + std::to_string(k) + " out of range for rank " +
                         std::to_string(t.rank()));
    const auto [pre, dim, post] = detail::split_at_mode(t.shape(), k);
    Matrix<T> m(dim, pre * post);
    const T* src = t.data().data();
    for (std::size_t p = 0; p < pre; ++p)
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t q = 0; q < post; ++q) m(i, p * post + q) = src[(p * dim + i) * post + q];
    return m;
}

template <typename T>
Tensor<T> mode_k_fold(const Matrix<T>& m, std::size_t k, const Shape& shape) {
    if (k >= shape.size()) throw ShapeError("mode_k_fold: mode out of range");
    const auto [pre, dim, post] = detail::split_at_mode(shape, k);
    if (m.rows() != dim || m.cols() != pre * post)
        throw ShapeError("mode_k_fold: matrix does not match target shape " + shape_string(shape));
    Tensor<T> t(shape);
    T* dst = t.data().data();
    for (std::size_t p = 0; p < pre; ++p)
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t q = 0; q < post; ++q) dst[(p * dim + i) * post + q] = m(i, p * post + q);
    return t;
}

}  // namespace mclkit
