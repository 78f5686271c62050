#pragma once

// Thin SVD by one-sided (Hestenes) Jacobi rotations, and truncated HOSVD factor
// extraction for sets of equally shaped tensors. All arithmetic runs in double
// regardless of the element type of the inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mclkit/tensor.hpp"

namespace mclkit {

template <typename T>
struct SvdResult {
    Matrix<T> u;           // rows x r, orthonormal columns
    std::vector<T> s;      // r values, non-negative, non-increasing
    Matrix<T> v;           // cols x r, orthonormal columns
};

struct JacobiOptions {
    int max_sweeps = 100;
    double tolerance = 1e-12;
};

namespace detail {

struct JacobiOutput {
    std::vector<std::vector<double>> columns;  // normalized left vectors (length m each)
    std::vector<double> s;
    std::vector<std::vector<double>> rotation;  // n x n, rotation[i] is column i
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// Orthonormalizes the columns of an m x n matrix (n <= m) given column-wise.
inline JacobiOutput one_sided_jacobi(std::vector<std::vector<double>> cols, std::size_t m,
                                     const JacobiOptions& opt) {
    const std::size_t n = cols.size();
    std::vector<std::vector<double>> rot(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) rot[i][i] = 1.0;

    bool converged = n < 2;
    for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double alpha = dot(cols[i], cols[i]);
                const double beta = dot(cols[j], cols[j]);
                const double gamma = dot(cols[i], cols[j]);
                if (gamma == 0.0 || std::abs(gamma) <= opt.tolerance * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                auto& ci = cols[i];
                auto& cj = cols[j];
                for (std::size_t r = 0; r < m; ++r) {
                    const double a = ci[r];
                    const double b = cj[r];
                    ci[r] = c * a - s * b;
                    cj[r] = s * a + c * b;
                }
                auto& vi = rot[i];
                auto& vj = rot[j];
                for (std::size_t r = 0; r < n; ++r) {
                    const double a = vi[r];
                    const double b = vj[r];
                    vi[r] = c * a - s * b;
                    vj[r] = s * a + c * b;
                }
            }
        }
        converged = !rotated;
    }
    if (!converged)
        throw ConvergenceError("svd: one-sided Jacobi did not converge within " + std::to_string(opt.max_sweeps) +
                               " sweeps");

    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = std::sqrt(dot(cols[i], cols[i]));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });

    JacobiOutput out;
    out.s.resize(n);
    out.columns.resize(n);
    out.rotation.resize(n);
    const double s_max = n ? s[order[0]] : 0.0;
    const double zero_cut = s_max * 1e-13 * static_cast<double>(std::max<std::size_t>(m, 1));
    std::vector<bool> valid(n, false);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.rotation[k] = std::move(rot[src]);
        out.columns[k] = std::move(cols[src]);
        if (s[src] > zero_cut && s[src] > 0.0) {
            out.s[k] = s[src];
            for (double& x : out.columns[k]) x /= s[src];
            valid[k] = true;
        } else {
            out.s[k] = 0.0;
        }
    }

    // Numerically null directions: complete to an orthonormal set from the standard basis.
    std::size_t next_basis = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (valid[k]) continue;
        while (next_basis < m) {
            std::vector<double> cand(m, 0.0);
            cand[next_basis++] = 1.0;
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t q = 0; q < n; ++q) {
                    if (!valid[q]) continue;
                    const double proj = dot(cand, out.columns[q]);
                    for (std::size_t r = 0; r < m; ++r) cand[r] -= proj * out.columns[q][r];
                }
            const double norm = std::sqrt(dot(cand, cand));
            if (norm > 0.5) {
                for (double& x : cand) x /= norm;
                out.columns[k] = std::move(cand);
                valid[k] = true;
                break;
            }
        }
        if (!valid[k]) throw ConvergenceError("svd: could not complete an orthonormal basis");
    }
    return out;
}

// Flips a pair of singular vectors so the first entry of `lead` that is nonzero
// (relative to the vector's largest magnitude) is non-negative.
inline void canonical_sign(std::vector<double>& lead, std::vector<double>& partner) {
    double peak = 0.0;
    for (double x : lead) peak = std::max(peak, std::abs(x));
    for (double x : lead) {
        if (std::abs(x) > 1e-10 * peak) {
            if (x < 0.0) {
                for (double& y : lead) y = -y;
                for (double& y : partner) y = -y;
            }
            return;
        }
    }
}

}  // namespace detail

/// Thin SVD m == U diag(s) V^T with r = min(rows, cols) singular triplets.
template <typename T>
SvdResult<T> svd(const Matrix<T>& m, const JacobiOptions& opt = {}) {
    for (T v : m.values())
        if (!std::isfinite(static_cast<double>(v))) throw ConfigError("svd: matrix has non-finite entries");
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    const bool tall = rows >= cols;
    // Columns of m (tall) or of m^T (wide), each as a contiguous vector.
    const std::size_t count = tall ? cols : rows;
    const std::size_t len = tall ? rows : cols;
    std::vector<std::vector<double>> work(count, std::vector<double>(len));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double x = static_cast<double>(m(r, c));
            if (tall)
                work[c][r] = x;
            else
                work[r][c] = x;
        }
    detail::JacobiOutput j = detail::one_sided_jacobi(std::move(work), len, opt);

    // left/right in terms of m
    std::vector<std::vector<double>>& left = tall ? j.columns : j.rotation;
    std::vector<std::vector<double>>& right = tall ? j.rotation : j.columns;
    const std::size_t r = count;
    for (std::size_t k = 0; k < r; ++k) detail::canonical_sign(left[k], right[k]);

    SvdResult<T> out{Matrix<T>(rows, r), std::vector<T>(r), Matrix<T>(cols, r)};
    for (std::size_t k = 0; k < r; ++k) {
        out.s[k] = static_cast<T>(j.s[k]);
        for (std::size_t i = 0; i < rows; ++i) out.u(i, k) = static_cast<T>(left[k][i]);
        for (std::size_t i = 0; i < cols; ++i) out.v(i, k) = static_cast<T>(right[k][i]);
    }
    return out;
}

/// Truncated HOSVD factors of a set of equally shaped tensors. Factor k is
/// M_k x I_k; its rows are the leading left singular vectors of the column-wise
/// concatenation [unfold_k(t_1), unfold_k(t_2), ...].
template <typename T>
std::vector<Matrix<T>> hosvd_factors(std::span<const Tensor<T>> samples, const Shape& target_dims,
                                     const JacobiOptions& opt = {}) {
    if (samples.empty()) throw ConfigError("hosvd_factors: empty sample list");
    const Shape& shape = samples.front().shape();
    if (target_dims.size() != shape.size())
        throw ShapeError("hosvd_factors: " + std::to_string(target_dims.size()) + " target dims for rank " +
                         std::to_string(shape.size()) + " samples");
    for (const auto& s : samples)
        if (s.shape() != shape)
            throw ShapeError("hosvd_factors: sample shape " + shape_string(s.shape()) + " differs from " +
                             shape_string(shape));
    for (std::size_t k = 0; k < shape.size(); ++k)
        if (target_dims[k] == 0 || target_dims[k] > shape[k])
            throw ConfigError("hosvd_factors: target dim " + std::to_string(target_dims[k]) + " in mode " +
                              std::to_string(k) + " exceeds signal dim " + std::to_string(shape[k]));

    std::vector<Matrix<T>> factors;
    factors.reserve(shape.size());
    for (std::size_t k = 0; k < shape.size(); ++k) {
        const std::size_t dim = shape[k];
        const std::size_t per = shape_size(shape) / dim;
        Matrix<double> concat(dim, per * samples.size());
        for (std::size_t n = 0; n < samples.size(); ++n) {
            const Matrix<T> unf = mode_k_unfold(samples[n], k);
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t c = 0; c < per; ++c) concat(i, n * per + c) = static_cast<double>(unf(i, c));
        }
        const SvdResult<double> dec = svd(concat, opt);
        Matrix<T> factor(target_dims[k], dim);
        for (std::size_t r = 0; r < target_dims[k]; ++r)
            for (std::size_t i = 0; i < dim; ++i) factor(r, i) = static_cast<T>(dec.u(i, r));
        factors.push_back(std::move(factor));
    }
    return factors;
}

template <typename T>
std::vector<Matrix<T>> hosvd_factors(const std::vector<Tensor<T>>& samples, const Shape& target_dims,
                                     const JacobiOptions& opt = {}) {
    return hosvd_factors(std::span<const Tensor<T>>(samples), target_dims, opt);
}

}  // namespace mclkit
