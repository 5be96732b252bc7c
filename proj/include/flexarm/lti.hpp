#pragma once

// Differentiable SISO/MIMO linear time-invariant operators.
// A filter is a rational transfer function
//   y(t) = sum_k b[k] u(t-k) - sum_j a[j] y(t-j)
// with implicit leading denominator coefficient 1 and zero initial state.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"

namespace flexarm {

struct TransferFunction {
    Vec b;  // numerator, length n_b >= 1
    Vec a;  // denominator a_1..a_{n_a}

    TransferFunction() = default;
    TransferFunction(Vec b_, Vec a_) : b(std::move(b_)), a(std::move(a_)) { validate(); }

    void validate() const {
        if (b.empty()) throw std::invalid_argument("TransferFunction: numerator must be non-empty");
        ensure_finite(b, "TransferFunction.b");
        ensure_finite(a, "TransferFunction.a");
    }

    std::size_t n_params() const { return b.size() + a.size(); }
};

// Raw filter recursion on preallocated buffers; y must not alias u.
inline void filter_raw(const double* b, std::size_t nb, const double* a, std::size_t na,
                       const double* u, double* y, std::size_t T) {
    // Unrolled steady-state loops for the two shapes on the training hot
    // path: full second-order sections and the 1/A(q) sensitivity recursion.
    if (nb == 2 && na == 2) {
        if (T == 0) return;
        const double b0 = b[0], b1 = b[1], a1 = a[0], a2 = a[1];
        y[0] = b0 * u[0];
        if (T > 1) y[1] = b0 * u[1] + b1 * u[0] - a1 * y[0];
        for (std::size_t t = 2; t < T; ++t) {
            y[t] = b0 * u[t] + b1 * u[t - 1] - a1 * y[t - 1] - a2 * y[t - 2];
        }
        return;
    }
    if (nb == 1 && na == 2) {
        if (T == 0) return;
        const double b0 = b[0], a1 = a[0], a2 = a[1];
        y[0] = b0 * u[0];
        if (T > 1) y[1] = b0 * u[1] - a1 * y[0];
        for (std::size_t t = 2; t < T; ++t) {
            y[t] = b0 * u[t] - a1 * y[t - 1] - a2 * y[t - 2];
        }
        return;
    }
    for (std::size_t t = 0; t < T; ++t) {
        double acc = 0.0;
        const std::size_t kb = std::min(nb - 1, t);
        for (std::size_t k = 0; k <= kb; ++k) acc += b[k] * u[t - k];
        const std::size_t ka = std::min(na, t);
        for (std::size_t j = 1; j <= ka; ++j) acc -= a[j - 1] * y[t - j];
        y[t] = acc;
    }
}

inline Vec siso_filter_forward(const TransferFunction& tf, const Vec& u) {
    tf.validate();
    ensure_finite(u, "siso_filter_forward.u");
    Vec y(u.size(), 0.0);
    filter_raw(tf.b.data(), tf.b.size(), tf.a.data(), tf.a.size(), u.data(), y.data(), u.size());
    return y;
}

// u filtered by 1/A(q); shared sensitivity recursion for coefficient gradients.
inline Vec filter_by_inverse_denominator(const Vec& a, const Vec& u) {
    const std::size_t T = u.size();
    const std::size_t na = a.size();
    Vec s(T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        double acc = u[t];
        const std::size_t ka = std::min(na, t);
        for (std::size_t j = 1; j <= ka; ++j) acc -= a[j - 1] * s[t - j];
        s[t] = acc;
    }
    return s;
}

struct SisoGrads {
    Vec grad_u;
    Vec grad_b;
    Vec grad_a;
};

// Exact reverse-mode gradients through the filter recursion.
//   grad_u    : adjoint operator, reverse-filter-reverse with the same tf
//   grad_b[k] : sum_t gy(t) * s_b(t-k), s_b = u / A(q)
//   grad_a[j] : -sum_t gy(t) * s_a(t-j), s_a = y / A(q)
inline SisoGrads siso_filter_backward(const TransferFunction& tf, const Vec& u, const Vec& y,
                                      const Vec& grad_y) {
    tf.validate();
    if (u.size() != y.size() || u.size() != grad_y.size()) {
        throw std::invalid_argument("siso_filter_backward: u, y, grad_y length mismatch");
    }
    const std::size_t T = u.size();
    SisoGrads g;

    Vec rev(grad_y.rbegin(), grad_y.rend());
    Vec filt = siso_filter_forward(tf, rev);
    g.grad_u.assign(filt.rbegin(), filt.rend());

    const Vec s_b = filter_by_inverse_denominator(tf.a, u);
    g.grad_b.assign(tf.b.size(), 0.0);
    for (std::size_t k = 0; k < tf.b.size(); ++k) {
        double acc = 0.0;
        for (std::size_t t = k; t < T; ++t) acc += grad_y[t] * s_b[t - k];
        g.grad_b[k] = acc;
    }

    const Vec s_a = filter_by_inverse_denominator(tf.a, y);
    g.grad_a.assign(tf.a.size(), 0.0);
    for (std::size_t j = 1; j <= tf.a.size(); ++j) {
        double acc = 0.0;
        for (std::size_t t = j; t < T; ++t) acc += grad_y[t] * s_a[t - j];
        g.grad_a[j - 1] = -acc;
    }
    return g;
}

inline Vec impulse_response(const TransferFunction& tf, std::size_t length) {
    if (length < 1) throw std::invalid_argument("impulse_response: length must be >= 1");
    Vec u(length, 0.0);
    u[0] = 1.0;
    return siso_filter_forward(tf, u);
}

// Magnitudes of the denominator roots, descending. Empty denominator -> empty list.
inline Vec pole_moduli(const TransferFunction& tf) {
    tf.validate();
    const std::size_t na = tf.a.size();
    if (na == 0) return {};
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<int>(na), static_cast<int>(na));
    for (std::size_t j = 0; j < na; ++j) companion(0, static_cast<int>(j)) = -tf.a[j];
    for (std::size_t i = 1; i < na; ++i) companion(static_cast<int>(i), static_cast<int>(i - 1)) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, /*computeEigenvectors=*/false);
    Vec mods(na);
    for (std::size_t i = 0; i < na; ++i) mods[i] = std::abs(es.eigenvalues()[static_cast<int>(i)]);
    std::sort(mods.rbegin(), mods.rend());
    return mods;
}

struct MimoLtiLayer {
    int in_channels = 0;
    int out_channels = 0;
    std::vector<TransferFunction> filters;  // row-major [out][in]

    const TransferFunction& at(int o, int i) const { return filters[static_cast<std::size_t>(o) * in_channels + i]; }
    TransferFunction& at(int o, int i) { return filters[static_cast<std::size_t>(o) * in_channels + i]; }

    std::size_t n_params() const {
        std::size_t n = 0;
        for (const auto& f : filters) n += f.n_params();
        return n;
    }

    void validate() const {
        if (in_channels < 1 || out_channels < 1) throw std::invalid_argument("MimoLtiLayer: channel counts must be positive");
        if (filters.size() != static_cast<std::size_t>(in_channels) * out_channels) {
            throw std::invalid_argument("MimoLtiLayer: filter grid shape mismatch");
        }
        const std::size_t nb = filters.front().b.size();
        const std::size_t na = filters.front().a.size();
        for (const auto& f : filters) {
            f.validate();
            if (f.b.size() != nb || f.a.size() != na) {
                throw std::invalid_argument("MimoLtiLayer: all filters must share (n_b, n_a)");
            }
        }
    }
};

inline MimoLtiLayer make_mimo_layer(int in_channels, int out_channels, int nb, int na, Rng& rng,
                                    double init_stddev = 0.01) {
    if (nb < 1 || na < 0) throw std::invalid_argument("make_mimo_layer: need n_b >= 1, n_a >= 0");
    std::normal_distribution<double> dist(0.0, init_stddev);
    MimoLtiLayer layer;
    layer.in_channels = in_channels;
    layer.out_channels = out_channels;
    layer.filters.resize(static_cast<std::size_t>(in_channels) * out_channels);
    for (auto& f : layer.filters) {
        f.b.resize(nb);
        f.a.resize(na);
        for (auto& c : f.b) c = dist(rng);
        for (auto& c : f.a) c = dist(rng);
    }
    layer.validate();
    return layer;
}

inline std::vector<Vec> mimo_lti_forward(const MimoLtiLayer& layer, const std::vector<Vec>& U) {
    layer.validate();
    if (static_cast<int>(U.size()) != layer.in_channels) {
        throw std::invalid_argument("mimo_lti_forward: expected " + std::to_string(layer.in_channels) +
                                    " input channels, got " + std::to_string(U.size()));
    }
    const std::size_t T = U.front().size();
    for (const auto& u : U) {
        if (u.size() != T) throw std::invalid_argument("mimo_lti_forward: unequal channel lengths");
    }
    std::vector<Vec> Y(layer.out_channels, Vec(T, 0.0));
    for (int o = 0; o < layer.out_channels; ++o) {
        for (int i = 0; i < layer.in_channels; ++i) {
            Vec yi = siso_filter_forward(layer.at(o, i), U[i]);
            for (std::size_t t = 0; t < T; ++t) Y[o][t] += yi[t];
        }
    }
    return Y;
}

struct MimoGrads {
    std::vector<Vec> grad_U;
    std::vector<Vec> grad_b;  // per filter, row-major [out][in]
    std::vector<Vec> grad_a;
};

inline MimoGrads mimo_lti_backward(const MimoLtiLayer& layer, const std::vector<Vec>& U,
                                   const std::vector<Vec>& grad_Y) {
    layer.validate();
    if (static_cast<int>(U.size()) != layer.in_channels ||
        static_cast<int>(grad_Y.size()) != layer.out_channels) {
        throw std::invalid_argument("mimo_lti_backward: channel-count mismatch");
    }
    const std::size_t T = U.front().size();
    MimoGrads g;
    g.grad_U.assign(U.size(), Vec(T, 0.0));
    g.grad_b.resize(layer.filters.size());
    g.grad_a.resize(layer.filters.size());
    for (int o = 0; o < layer.out_channels; ++o) {
        for (int i = 0; i < layer.in_channels; ++i) {
            const auto& f = layer.at(o, i);
            // per-pair forward output is needed for the a-gradient recursion
            Vec y_oi = siso_filter_forward(f, U[i]);
            SisoGrads sg = siso_filter_backward(f, U[i], y_oi, grad_Y[o]);
            for (std::size_t t = 0; t < T; ++t) g.grad_U[i][t] += sg.grad_u[t];
            const std::size_t idx = static_cast<std::size_t>(o) * layer.in_channels + i;
            g.grad_b[idx] = std::move(sg.grad_b);
            g.grad_a[idx] = std::move(sg.grad_a);
        }
    }
    return g;
}

}  // namespace flexarm
