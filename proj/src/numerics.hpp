#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace dmrf::numerics {

enum class Activation { Sigmoid, Relu };

inline const char* activation_name(Activation a) {
    return a == Activation::Sigmoid ? "sigmoid" : "relu";
}

// Dense row-major matrix. Small sizes only, no aliasing assumptions.
template <typename T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, T(0)) {}

    T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    T operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

// y = M * x
template <typename T>
void matvec(const Mat<T>& m, std::span<const T> x, std::span<T> y) {
    require(static_cast<int>(x.size()) == m.cols && static_cast<int>(y.size()) == m.rows,
            Status::Dimension, "matvec: shape mismatch");
    for (int r = 0; r < m.rows; ++r) {
        T acc = T(0);
        const T* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
        for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
}

// y += M * x
template <typename T>
void matvec_acc(const Mat<T>& m, std::span<const T> x, std::span<T> y) {
    require(static_cast<int>(x.size()) == m.cols && static_cast<int>(y.size()) == m.rows,
            Status::Dimension, "matvec_acc: shape mismatch");
    for (int r = 0; r < m.rows; ++r) {
        T acc = T(0);
        const T* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
        for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// y += M^T * x
template <typename T>
void matvec_t_acc(const Mat<T>& m, std::span<const T> x, std::span<T> y) {
    require(static_cast<int>(x.size()) == m.rows && static_cast<int>(y.size()) == m.cols,
            Status::Dimension, "matvec_t_acc: shape mismatch");
    for (int r = 0; r < m.rows; ++r) {
        const T xr = x[r];
        const T* row = m.data.data() + static_cast<std::size_t>(r) * m.cols;
        for (int c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
    }
}

// A += scale * u v^T
template <typename T>
void outer_acc(Mat<T>& a, std::span<const T> u, std::span<const T> v, T scale = T(1)) {
    require(static_cast<int>(u.size()) == a.rows && static_cast<int>(v.size()) == a.cols,
            Status::Dimension, "outer_acc: shape mismatch");
    for (int r = 0; r < a.rows; ++r) {
        T* row = a.data.data() + static_cast<std::size_t>(r) * a.cols;
        const T ur = scale * u[r];
        for (int c = 0; c < a.cols; ++c) row[c] += ur * v[c];
    }
}

// y += alpha * x
template <typename T>
void axpy(T alpha, std::span<const T> x, std::span<T> y) {
    require(x.size() == y.size(), Status::Dimension, "axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

template <typename T>
T sigma_scalar(T z, Activation kind) {
    if (kind == Activation::Relu) return z > T(0) ? z : T(0);
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

// Derivative of sigma expressed through its output value h = sigma(z).
template <typename T>
T sigma_deriv_from_value(T h, Activation kind) {
    if (kind == Activation::Relu) return h > T(0) ? T(1) : T(0);
    return h * (T(1) - h);
}

template <typename T>
T sigma_inv_scalar(T h, Activation kind) {
    if (kind == Activation::Relu) {
        require(h > T(0), Status::InvalidArg, "sigma_inv: relu invertible only on (0,inf)");
        return h;
    }
    require(h > T(0) && h < T(1), Status::InvalidArg, "sigma_inv: sigmoid domain is (0,1)");
    return std::log(h / (T(1) - h));
}

// Regularizer eta with eta'(h) = sigma^-1(h) and the additive constant fixed
// to zero. Sigmoid: h ln h + (1-h) ln(1-h) on (0,1). Relu: h^2/2 on [0,inf).
template <typename T>
T eta_scalar(T h, Activation kind) {
    if (kind == Activation::Relu) {
        require(h >= T(0), Status::InvalidArg, "eta: relu domain is [0,inf)");
        return h * h / T(2);
    }
    require(h > T(0) && h < T(1), Status::InvalidArg, "eta: sigmoid domain is (0,1)");
    return h * std::log(h) + (T(1) - h) * std::log(T(1) - h);
}

template <typename T>
void sigma(std::span<const T> z, Activation kind, std::span<T> out) {
    require(z.size() == out.size(), Status::Dimension, "sigma: length mismatch");
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = sigma_scalar(z[i], kind);
}

template <typename T>
std::vector<T> sigma(const std::vector<T>& z, Activation kind) {
    std::vector<T> out(z.size());
    sigma<T>(std::span<const T>(z), kind, std::span<T>(out));
    return out;
}

template <typename T>
std::vector<T> eta(const std::vector<T>& h, Activation kind) {
    std::vector<T> out(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        try {
            out[i] = eta_scalar(h[i], kind);
        } catch (const Error& e) {
            throw Error(e.code(), std::string(e.what()) + " (index " + std::to_string(i) + ")");
        }
    }
    return out;
}

template <typename T>
T logsumexp(std::span<const T> v) {
    require(!v.empty(), Status::InvalidArg, "logsumexp: empty vector");
    T m = v[0];
    for (std::size_t i = 1; i < v.size(); ++i) m = std::max(m, v[i]);
    if (v.size() == 1) return m;
    T acc = T(0);
    for (std::size_t i = 0; i < v.size(); ++i) acc += std::exp(v[i] - m);
    return m + std::log(acc);
}

template <typename T>
bool all_finite(std::span<const T> v) {
    for (T x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

} // namespace dmrf::numerics
