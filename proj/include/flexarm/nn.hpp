#pragma once

// Minimal training infrastructure: parameters, dense layers, ReLU, a simple
// recurrent cell, MSE + L2 loss and Adam. Reverse passes are hand-written per
// layer; finite differences arbitrate correctness in the test suite.

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"

namespace flexarm {

struct Parameter {
    std::string name;
    std::vector<std::size_t> shape;
    Vec value;
    Vec grad;
    bool trainable = true;
    bool grad_populated = false;

    Parameter() = default;
    Parameter(std::string name_, std::vector<std::size_t> shape_, bool trainable_ = true)
        : name(std::move(name_)), shape(std::move(shape_)), trainable(trainable_) {
        std::size_t n = 1;
        for (auto s : shape) n *= s;
        value.assign(n, 0.0);
        grad.assign(n, 0.0);
    }

    std::size_t size() const { return value.size(); }

    void zero_grad() {
        std::fill(grad.begin(), grad.end(), 0.0);
        grad_populated = false;
    }
};

struct DenseLayer {
    int in = 0, out = 0;
    Parameter W;  // row-major out x in
    Parameter b;

    DenseLayer() = default;
    DenseLayer(std::string name, int in_, int out_) : in(in_), out(out_) {
        W = Parameter(name + ".W", {static_cast<std::size_t>(out_), static_cast<std::size_t>(in_)});
        b = Parameter(name + ".b", {static_cast<std::size_t>(out_)});
    }

    void init(Rng& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& w : W.value) w = dist(rng);
        std::fill(b.value.begin(), b.value.end(), 0.0);
    }

    std::size_t n_params() const { return W.size() + b.size(); }

    Vec forward(const Vec& x) const {
        if (static_cast<int>(x.size()) != in) {
            throw std::invalid_argument(W.name + ": input width " + std::to_string(x.size()) +
                                        ", expected " + std::to_string(in));
        }
        Vec y(out);
        for (int o = 0; o < out; ++o) {
            const double* row = &W.value[static_cast<std::size_t>(o) * in];
            double acc = b.value[o];
            for (int i = 0; i < in; ++i) acc += row[i] * x[i];
            y[o] = acc;
        }
        return y;
    }

    // Accumulates parameter gradients, returns grad wrt the input.
    Vec backward(const Vec& x, const Vec& grad_y) {
        Vec gx(in, 0.0);
        for (int o = 0; o < out; ++o) {
            const double g = grad_y[o];
            double* wrow = &W.grad[static_cast<std::size_t>(o) * in];
            const double* vrow = &W.value[static_cast<std::size_t>(o) * in];
            b.grad[o] += g;
            for (int i = 0; i < in; ++i) {
                wrow[i] += g * x[i];
                gx[i] += vrow[i] * g;
            }
        }
        W.grad_populated = true;
        b.grad_populated = true;
        return gx;
    }
};

inline Vec relu(const Vec& x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

// Subgradient 0 at exactly 0.
inline Vec relu_backward(const Vec& x, const Vec& grad_y) {
    Vec gx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? grad_y[i] : 0.0;
    return gx;
}

// mean of squared residuals over all elements + lambda * sum ||trainable params||^2
inline double mse_l2_loss(const Vec& pred, const Vec& target,
                          const std::vector<const Parameter*>& params, double lambda) {
    if (pred.size() != target.size()) throw std::invalid_argument("mse_l2_loss: shape mismatch");
    if (pred.empty()) throw std::invalid_argument("mse_l2_loss: empty prediction");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - target[i];
        acc += r * r;
    }
    acc /= static_cast<double>(pred.size());
    if (lambda != 0.0) {
        double reg = 0.0;
        for (const auto* p : params) {
            if (!p->trainable) continue;
            for (double w : p->value) reg += w * w;
        }
        acc += lambda * reg;
    }
    return acc;
}

inline Vec mse_grad(const Vec& pred, const Vec& target) {
    if (pred.size() != target.size()) throw std::invalid_argument("mse_grad: shape mismatch");
    Vec g(pred.size());
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
    return g;
}

struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double l2 = 0.0;  // gradient contribution 2*l2*w on trainable parameters
    long step_count = 0;
    std::vector<Vec> m, v;

    explicit AdamState(const std::vector<Parameter*>& params, double lr_ = 1e-4, double l2_ = 0.0)
        : lr(lr_), l2(l2_) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const auto* p : params) {
            m.emplace_back(p->size(), 0.0);
            v.emplace_back(p->size(), 0.0);
        }
    }

    // Standard Adam with bias correction; frozen parameters receive no update.
    // Gradients are zeroed afterward.
    void step(const std::vector<Parameter*>& params) {
        if (params.size() != m.size()) throw std::invalid_argument("AdamState: parameter set changed");
        for (const auto* p : params) {
            if (p->trainable && !p->grad_populated) {
                throw std::logic_error("AdamState: step on unpopulated gradient for " + p->name);
            }
        }
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Parameter& p = *params[pi];
            if (p.trainable) {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const double g = p.grad[i] + 2.0 * l2 * p.value[i];
                    m[pi][i] = beta1 * m[pi][i] + (1.0 - beta1) * g;
                    v[pi][i] = beta2 * v[pi][i] + (1.0 - beta2) * g * g;
                    const double mhat = m[pi][i] / bc1;
                    const double vhat = v[pi][i] / bc2;
                    p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
                }
            }
            p.zero_grad();
        }
    }
};

// Recurrent cell: concatenated [x, h] drives a 3-layer output path and a
// 2-layer hidden path, ReLU between layers.
struct RnnCell {
    int in = 0, hidden = 0, out = 0;
    DenseLayer main1, main2, main3;
    DenseLayer hid1, hid2;

    RnnCell() = default;
    RnnCell(int in_, int hidden_, int out_)
        : in(in_), hidden(hidden_), out(out_),
          main1("rnn.main1", in_ + hidden_, 64),
          main2("rnn.main2", 64, 32),
          main3("rnn.main3", 32, out_),
          hid1("rnn.hid1", in_ + hidden_, 32),
          hid2("rnn.hid2", 32, hidden_) {}

    void init(Rng& rng) {
        main1.init(rng);
        main2.init(rng);
        main3.init(rng);
        hid1.init(rng);
        hid2.init(rng);
    }

    std::vector<Parameter*> parameters() {
        return {&main1.W, &main1.b, &main2.W, &main2.b, &main3.W, &main3.b,
                &hid1.W, &hid1.b, &hid2.W, &hid2.b};
    }

    std::size_t n_params() const {
        return main1.n_params() + main2.n_params() + main3.n_params() + hid1.n_params() +
               hid2.n_params();
    }

    struct StepCache {
        Vec z;          // [x, h]
        Vec m1, m1r;    // main path pre/post activation
        Vec m2, m2r;
        Vec h1, h1r;    // hidden path
    };

    std::pair<Vec, Vec> step(const Vec& x, const Vec& h, StepCache* cache = nullptr) const {
        if (static_cast<int>(x.size()) != in || static_cast<int>(h.size()) != hidden) {
            throw std::invalid_argument("RnnCell::step: width mismatch");
        }
        Vec z;
        z.reserve(x.size() + h.size());
        z.insert(z.end(), x.begin(), x.end());
        z.insert(z.end(), h.begin(), h.end());
        Vec m1 = main1.forward(z);
        Vec m1r = relu(m1);
        Vec m2 = main2.forward(m1r);
        Vec m2r = relu(m2);
        Vec y = main3.forward(m2r);
        Vec h1 = hid1.forward(z);
        Vec h1r = relu(h1);
        Vec hn = hid2.forward(h1r);
        if (cache) {
            cache->z = z;
            cache->m1 = std::move(m1);
            cache->m1r = m1r;
            cache->m2 = std::move(m2);
            cache->m2r = m2r;
            cache->h1 = std::move(h1);
            cache->h1r = h1r;
        }
        return {std::move(y), std::move(hn)};
    }

    // Returns (grad_x, grad_h) for one step.
    std::pair<Vec, Vec> step_backward(const StepCache& c, const Vec& grad_y, const Vec& grad_hn) {
        Vec gz(static_cast<std::size_t>(in + hidden), 0.0);
        {
            Vec g = main3.backward(c.m2r, grad_y);
            g = relu_backward(c.m2, g);
            g = main2.backward(c.m1r, g);
            g = relu_backward(c.m1, g);
            Vec gzi = main1.backward(c.z, g);
            for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += gzi[i];
        }
        {
            Vec g = hid2.backward(c.h1r, grad_hn);
            g = relu_backward(c.h1, g);
            Vec gzi = hid1.backward(c.z, g);
            for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += gzi[i];
        }
        Vec gx(gz.begin(), gz.begin() + in);
        Vec gh(gz.begin() + in, gz.end());
        return {std::move(gx), std::move(gh)};
    }
};

}  // namespace flexarm
