#pragma once

// Offline signal conditioning: zero-phase Savitzky-Golay smoothing and
// natural-cubic-spline acceleration estimation from velocity samples.

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "common.hpp"

namespace flexarm {

struct TimeSeries {
    Vec values;
    double dt = 0.05;
};

struct SavGolSpec {
    int window = 21;  // odd
    int order = 2;

    void validate() const {
        if (window % 2 == 0) throw std::invalid_argument("SavGolSpec: window must be odd");
        if (order < 0 || order >= window) throw std::invalid_argument("SavGolSpec: need window > order >= 0");
    }
};

// Centered least-squares kernel: symmetric, unit sum, exact on polynomials <= order.
inline Vec savgol_kernel(const SavGolSpec& spec) {
    spec.validate();
    const int m = spec.window / 2;
    const int p = spec.order;
    Eigen::MatrixXd V(spec.window, p + 1);
    for (int j = -m; j <= m; ++j) {
        double pw = 1.0;
        for (int k = 0; k <= p; ++k) {
            V(j + m, k) = pw;
            pw *= j;
        }
    }
    Eigen::MatrixXd G = (V.transpose() * V).ldlt().solve(V.transpose());
    Vec kernel(spec.window);
    for (int j = 0; j < spec.window; ++j) kernel[j] = G(0, j);
    return kernel;
}

inline Vec savgol_smooth(const Vec& series, const SavGolSpec& spec = {}) {
    spec.validate();
    const int n = static_cast<int>(series.size());
    if (n < spec.window) {
        throw std::invalid_argument("savgol_smooth: series shorter than window (" +
                                    std::to_string(n) + " < " + std::to_string(spec.window) + ")");
    }
    ensure_finite(series, "savgol_smooth.series");
    const Vec kernel = savgol_kernel(spec);
    const int m = spec.window / 2;
    Vec out(series.size());
    for (int t = 0; t < n; ++t) {
        double acc = 0.0;
        for (int j = -m; j <= m; ++j) {
            int idx = t + j;
            if (idx < 0) idx = -idx;                      // mirror padding
            if (idx >= n) idx = 2 * (n - 1) - idx;
            acc += kernel[j + m] * series[idx];
        }
        out[t] = acc;
    }
    return out;
}

inline TimeSeries savgol_smooth(const TimeSeries& series, const SavGolSpec& spec = {}) {
    return {savgol_smooth(series.values, spec), series.dt};
}

// Natural cubic spline second derivatives at the knots (uniform spacing h).
inline Vec natural_spline_second_derivatives(const Vec& v, double h) {
    const int n = static_cast<int>(v.size());
    Vec M(v.size(), 0.0);
    const int m = n - 2;  // interior unknowns
    if (m <= 0) return M;
    Vec diag(m, 2.0 * h / 3.0), off(m, h / 6.0), rhs(m);
    for (int i = 0; i < m; ++i) rhs[i] = (v[i + 2] - 2.0 * v[i + 1] + v[i]) / h;
    // Thomas algorithm
    for (int i = 1; i < m; ++i) {
        const double w = off[i] / diag[i - 1];
        diag[i] -= w * off[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    M[m] = rhs[m - 1] / diag[m - 1];
    for (int i = m - 2; i >= 0; --i) M[i + 1] = (rhs[i] - off[i] * M[i + 2]) / diag[i];
    return M;
}

// Analytic first derivative of the natural cubic spline through the velocity
// samples, evaluated at the sample instants.
inline Vec spline_acceleration(const Vec& velocity, double dt) {
    const int n = static_cast<int>(velocity.size());
    if (n < 4) throw std::invalid_argument("spline_acceleration: need at least 4 samples");
    if (!(dt > 0.0)) throw std::invalid_argument("spline_acceleration: dt must be positive");
    ensure_finite(velocity, "spline_acceleration.velocity");
    const Vec M = natural_spline_second_derivatives(velocity, dt);
    Vec acc(velocity.size());
    for (int i = 0; i < n - 1; ++i) {
        acc[i] = (velocity[i + 1] - velocity[i]) / dt - dt * (2.0 * M[i] + M[i + 1]) / 6.0;
    }
    acc[n - 1] = (velocity[n - 1] - velocity[n - 2]) / dt + dt * (2.0 * M[n - 1] + M[n - 2]) / 6.0;
    return acc;
}

inline TimeSeries spline_acceleration(const TimeSeries& velocity) {
    return {spline_acceleration(velocity.values, velocity.dt), velocity.dt};
}

}  // namespace flexarm
