#pragma once

// Model builders and forward/backward contracts: FIN (one-step forward
// dynamics), DWH branches (LTI -> FC -> ReLU -> FC -> LTI inverse dynamics),
// the FIN-DWH composite, and the FC/RNN comparison baselines.

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lti.hpp"
#include "nn.hpp"
#include "trajectory.hpp"

namespace flexarm {

// Eq-style model input: two consecutive desired states,
// [th(t), thd(t), thdd(t), th(t+1), thd(t+1), thdd(t+1)], width 6N.
inline Vec model_input(const Trajectory& d, std::size_t t) {
    if (t + 1 >= d.length()) throw std::out_of_range("model_input: t+1 beyond trajectory");
    Vec x;
    x.reserve(static_cast<std::size_t>(6 * d.joints));
    for (std::size_t s = t; s <= t + 1; ++s) {
        x.insert(x.end(), d.pos[s].begin(), d.pos[s].end());
        x.insert(x.end(), d.vel[s].begin(), d.vel[s].end());
        x.insert(x.end(), d.acc[s].begin(), d.acc[s].end());
    }
    return x;
}

// ---------------------------------------------------------------------------
// Three-layer MLP, shared shape of the FIN model and the FC baseline:
// 6N -> 64 -> 32 -> 2N with ReLU between layers.
struct Mlp {
    std::string kind;
    int N = 0;

    DenseLayer l1, l2, l3;

    Mlp() = default;
    Mlp(std::string kind_, int N_)
        : kind(std::move(kind_)), N(N_),
          l1(kind + ".l1", 6 * N_, 64),
          l2(kind + ".l2", 64, 32),
          l3(kind + ".l3", 32, 2 * N_) {
        if (N_ < 1) throw std::invalid_argument("Mlp: N must be >= 1");
    }

    void init(Rng& rng) {
        l1.init(rng);
        l2.init(rng);
        l3.init(rng);
    }

    std::vector<Parameter*> parameters() { return {&l1.W, &l1.b, &l2.W, &l2.b, &l3.W, &l3.b}; }
    std::size_t n_params() const { return l1.n_params() + l2.n_params() + l3.n_params(); }

    std::string fingerprint() const {
        return kind + "(N=" + std::to_string(N) + "," + std::to_string(6 * N) + "-64-32-" +
               std::to_string(2 * N) + ")";
    }

    struct Cache {
        Vec x, z1, r1, z2, r2;
    };

    Vec forward(const Vec& x, Cache* cache = nullptr) const {
        Vec z1 = l1.forward(x);
        Vec r1 = relu(z1);
        Vec z2 = l2.forward(r1);
        Vec r2 = relu(z2);
        Vec y = l3.forward(r2);
        if (cache) {
            cache->x = x;
            cache->z1 = std::move(z1);
            cache->r1 = std::move(r1);
            cache->z2 = std::move(z2);
            cache->r2 = std::move(r2);
        }
        return y;
    }

    Vec backward(const Cache& c, const Vec& grad_y) {
        Vec g = l3.backward(c.r2, grad_y);
        g = relu_backward(c.z2, g);
        g = l2.backward(c.r1, g);
        g = relu_backward(c.z1, g);
        return l1.backward(c.x, g);
    }

    // Feed-forward baseline use: pointwise command prediction along a trajectory.
    std::vector<Vec> predict_sequence(const Trajectory& desired) const {
        if (desired.length() < 2) throw std::invalid_argument("predict_sequence: need >= 2 points");
        std::vector<Vec> out;
        out.reserve(desired.length() - 1);
        for (std::size_t t = 0; t + 1 < desired.length(); ++t) out.push_back(forward(model_input(desired, t)));
        return out;
    }
};

inline Mlp build_fin(int N, Rng& rng) {
    Mlp m("fin", N);
    m.init(rng);
    return m;
}

inline Mlp build_fc_baseline(int N, Rng& rng) {
    Mlp m("fc", N);
    m.init(rng);
    return m;
}

// ---------------------------------------------------------------------------
// Parameter-backed MIMO LTI block (all filters share n_b, n_a).
struct LtiBlock {
    int in = 0, out = 0, nb = 2, na = 2;
    Parameter bc;  // [out*in, nb]
    Parameter ac;  // [out*in, na]

    LtiBlock() = default;
    LtiBlock(std::string name, int in_, int out_, int nb_ = 2, int na_ = 2)
        : in(in_), out(out_), nb(nb_), na(na_) {
        const auto pairs = static_cast<std::size_t>(in_) * static_cast<std::size_t>(out_);
        bc = Parameter(name + ".b", {pairs, static_cast<std::size_t>(nb_)});
        ac = Parameter(name + ".a", {pairs, static_cast<std::size_t>(na_)});
    }

    // Random taps start small, so every filter begins near-FIR and near-zero
    // with poles well inside the unit circle; structural pass-through taps
    // (see add_tap) dominate the initial response where the owner installs
    // them, and training grows the rest as dynamic corrections.
    void init(Rng& rng, double tap_std = 0.01) {
        std::normal_distribution<double> dist(0.0, tap_std);
        for (auto& c : bc.value) c = dist(rng);
        for (auto& c : ac.value) c = dist(rng);
    }

    // Adds v to the k-th numerator tap of the (out=o, in=i) filter.
    void add_tap(int o, int i, int k, double v) {
        bc.value[(static_cast<std::size_t>(o) * in + static_cast<std::size_t>(i)) * nb +
                 static_cast<std::size_t>(k)] += v;
    }

    std::size_t n_params() const { return bc.size() + ac.size(); }

    MimoLtiLayer layer() const {
        MimoLtiLayer l;
        l.in_channels = in;
        l.out_channels = out;
        l.filters.resize(static_cast<std::size_t>(in) * out);
        for (std::size_t f = 0; f < l.filters.size(); ++f) {
            l.filters[f].b.assign(bc.value.begin() + f * nb, bc.value.begin() + (f + 1) * nb);
            l.filters[f].a.assign(ac.value.begin() + f * na, ac.value.begin() + (f + 1) * na);
        }
        return l;
    }

    void check_shapes(const std::vector<Vec>& U, std::size_t& T) const {
        if (static_cast<int>(U.size()) != in) {
            throw std::invalid_argument("LtiBlock: expected " + std::to_string(in) +
                                        " input channels, got " + std::to_string(U.size()));
        }
        T = U.front().size();
        for (const auto& u : U) {
            if (u.size() != T) throw std::invalid_argument("LtiBlock: unequal channel lengths");
        }
    }

    // Same recursion as mimo_lti_forward, run directly on the coefficient
    // storage; this is the training hot path. No shared mutable state, so
    // concurrent forward calls on one block are safe. When pair_cache is
    // given, the per-filter outputs are kept for reuse in backward.
    std::vector<Vec> forward(const std::vector<Vec>& U, std::vector<Vec>* pair_cache = nullptr) const {
        std::size_t T = 0;
        check_shapes(U, T);
        std::vector<Vec> Y(static_cast<std::size_t>(out), Vec(T, 0.0));
        if (pair_cache) pair_cache->assign(static_cast<std::size_t>(out) * in, Vec());
        Vec tmp(T);
        for (int o = 0; o < out; ++o) {
            Vec& yo = Y[static_cast<std::size_t>(o)];
            for (int i = 0; i < in; ++i) {
                const std::size_t f = static_cast<std::size_t>(o) * in + static_cast<std::size_t>(i);
                filter_raw(&bc.value[f * nb], nb, &ac.value[f * na], na, U[static_cast<std::size_t>(i)].data(),
                           tmp.data(), T);
                for (std::size_t t = 0; t < T; ++t) yo[t] += tmp[t];
                if (pair_cache) (*pair_cache)[f] = tmp;
            }
        }
        return Y;
    }

    // Reverse mode, same math as mimo_lti_backward (adjoint = reverse-filter-
    // reverse; coefficient gradients via the 1/A(q) sensitivity recursions),
    // with buffers reused across filter pairs. pair_cache, when given, must
    // be the per-filter outputs kept by forward; need_input_grad=false skips
    // the adjoint pass entirely and returns an empty vector (used in training
    // when the block sits directly on data).
    std::vector<Vec> backward(const std::vector<Vec>& U, const std::vector<Vec>& grad_Y,
                              const std::vector<Vec>* pair_cache = nullptr, bool need_input_grad = true) {
        std::size_t T = 0;
        check_shapes(U, T);
        if (static_cast<int>(grad_Y.size()) != out) {
            throw std::invalid_argument("LtiBlock::backward: output channel-count mismatch");
        }
        std::vector<Vec> gU;
        if (need_input_grad) gU.assign(static_cast<std::size_t>(in), Vec(T, 0.0));
        Vec gy_rev(T), filt(T), y_buf(T), s(T);
        const double one = 1.0;
        const std::size_t nbz = static_cast<std::size_t>(nb), naz = static_cast<std::size_t>(na);
        for (int o = 0; o < out; ++o) {
            const Vec& gy = grad_Y[static_cast<std::size_t>(o)];
            if (gy.size() != T) throw std::invalid_argument("LtiBlock::backward: grad length mismatch");
            if (need_input_grad) {
                for (std::size_t t = 0; t < T; ++t) gy_rev[t] = gy[T - 1 - t];
            }
            for (int i = 0; i < in; ++i) {
                const std::size_t f = static_cast<std::size_t>(o) * in + static_cast<std::size_t>(i);
                const double* b = &bc.value[f * nbz];
                const double* a = &ac.value[f * naz];
                const Vec& u = U[static_cast<std::size_t>(i)];
                if (need_input_grad) {
                    filter_raw(b, nbz, a, naz, gy_rev.data(), filt.data(), T);
                    Vec& gu = gU[static_cast<std::size_t>(i)];
                    for (std::size_t t = 0; t < T; ++t) gu[t] += filt[T - 1 - t];
                }
                filter_raw(&one, 1, a, naz, u.data(), s.data(), T);
                for (std::size_t k = 0; k < nbz; ++k) {
                    double acc = 0.0;
                    for (std::size_t t = k; t < T; ++t) acc += gy[t] * s[t - k];
                    bc.grad[f * nbz + k] += acc;
                }
                const double* y_oi;
                if (pair_cache) {
                    y_oi = (*pair_cache)[f].data();
                } else {
                    filter_raw(b, nbz, a, naz, u.data(), y_buf.data(), T);
                    y_oi = y_buf.data();
                }
                filter_raw(&one, 1, a, naz, y_oi, s.data(), T);
                for (std::size_t j = 1; j <= naz; ++j) {
                    double acc = 0.0;
                    for (std::size_t t = j; t < T; ++t) acc += gy[t] * s[t - j];
                    ac.grad[f * naz + j - 1] -= acc;
                }
            }
        }
        bc.grad_populated = true;
        ac.grad_populated = true;
        return gU;
    }

    double max_pole_modulus() const {
        double worst = 0.0;
        for (const auto& f : layer().filters) {
            Vec mods = pole_moduli(f);
            if (!mods.empty() && mods.front() > worst) worst = mods.front();
        }
        return worst;
    }
};

// ---------------------------------------------------------------------------
// One DWH branch: LTI (in -> 2N) -> FC (2N -> 32) -> ReLU -> FC (32 -> N)
// -> LTI (N -> N). LTI layers are stateful along the time axis; state is
// zero at every sequence start.
struct DwhBranch {
    int in_dim = 0, N = 0;
    LtiBlock lti_in;
    DenseLayer d1, d2;
    LtiBlock lti_out;

    DwhBranch() = default;
    DwhBranch(const std::string& name, int in_dim_, int N_)
        : in_dim(in_dim_), N(N_),
          lti_in(name + ".lti_in", in_dim_, 2 * N_),
          d1(name + ".d1", 2 * N_, 32),
          d2(name + ".d2", 32, N_),
          lti_out(name + ".lti_out", N_, N_) {}

    // Near-identity initialization. When passthrough_base >= 0 the branch
    // starts out approximately replaying the N input channels at that offset
    // (the next-sample reference block routed to this branch), so the initial
    // command is close to the reference and training learns the dynamic
    // correction on top instead of first having to recover the output scale.
    // Routing: first-LTI feature k taps channel base+k (b0 = 1) and feature
    // N+k taps its one-step delay (b1 = 1), giving the dense stack a local
    // finite-difference view; the dense pair carries feature k through the
    // ReLU via a +/- split; the output LTI starts as a unit feedthrough.
    // Random weights stay small around the structural ones.
    void init(Rng& rng, int passthrough_base = -1) {
        lti_in.init(rng);
        d1.init(rng);
        d2.init(rng);
        lti_out.init(rng);
        for (int o = 0; o < N; ++o) lti_out.add_tap(o, o, 0, 1.0);
        const double shrink = 0.3;
        for (auto& w : d1.W.value) w *= shrink;
        for (auto& w : d2.W.value) w *= shrink;
        if (passthrough_base < 0) return;
        if (passthrough_base + N > in_dim || 2 * N > d1.out || lti_in.nb < 2) {
            throw std::invalid_argument("DwhBranch::init: pass-through routing does not fit");
        }
        for (int k = 0; k < N; ++k) {
            lti_in.add_tap(k, passthrough_base + k, 0, 1.0);
            lti_in.add_tap(N + k, passthrough_base + k, 1, 1.0);
            d1.W.value[static_cast<std::size_t>(k) * d1.in + k] += 1.0;
            d1.W.value[static_cast<std::size_t>(N + k) * d1.in + k] -= 1.0;
            d2.W.value[static_cast<std::size_t>(k) * d2.in + k] += 1.0;
            d2.W.value[static_cast<std::size_t>(k) * d2.in + (N + k)] -= 1.0;
        }
    }

    std::vector<Parameter*> parameters() {
        return {&lti_in.bc, &lti_in.ac, &d1.W, &d1.b, &d2.W, &d2.b, &lti_out.bc, &lti_out.ac};
    }

    std::size_t n_params() const {
        return lti_in.n_params() + d1.n_params() + d2.n_params() + lti_out.n_params();
    }

    struct Cache {
        std::vector<Vec> U;   // in_dim x T (channel-major)
        std::vector<Vec> Z;   // 2N x T, first LTI output
        std::vector<Vec> A;   // T x 32, dense1 pre-activation (time-major)
        std::vector<Vec> R;   // T x 32, post-ReLU
        std::vector<Vec> Zt;  // T x 2N, time-major view of Z
        std::vector<Vec> C;   // N x T, dense stack output (channel-major)
        std::vector<Vec> in_pairs, out_pairs;  // per-filter LTI outputs
    };

    // Input time-major (T x in_dim), output time-major (T x N).
    std::vector<Vec> forward(const std::vector<Vec>& X, Cache* cache = nullptr) const {
        const std::size_t T = X.size();
        if (T == 0) throw std::invalid_argument("DwhBranch::forward: empty sequence");
        std::vector<Vec> U(static_cast<std::size_t>(in_dim), Vec(T));
        for (std::size_t t = 0; t < T; ++t) {
            if (static_cast<int>(X[t].size()) != in_dim) {
                throw std::invalid_argument("DwhBranch::forward: input width mismatch");
            }
            for (int i = 0; i < in_dim; ++i) U[static_cast<std::size_t>(i)][t] = X[t][i];
        }
        std::vector<Vec> Z = lti_in.forward(U, cache ? &cache->in_pairs : nullptr);
        std::vector<Vec> C(static_cast<std::size_t>(N), Vec(T));
        std::vector<Vec> A, R, Zt;
        if (cache) {
            A.resize(T);
            R.resize(T);
            Zt.resize(T);
        }
        Vec z_t(static_cast<std::size_t>(2 * N));
        for (std::size_t t = 0; t < T; ++t) {
            for (int i = 0; i < 2 * N; ++i) z_t[static_cast<std::size_t>(i)] = Z[static_cast<std::size_t>(i)][t];
            Vec a = d1.forward(z_t);
            Vec r = relu(a);
            Vec c = d2.forward(r);
            for (int i = 0; i < N; ++i) C[static_cast<std::size_t>(i)][t] = c[static_cast<std::size_t>(i)];
            if (cache) {
                Zt[t] = z_t;
                A[t] = std::move(a);
                R[t] = std::move(r);
            }
        }
        std::vector<Vec> Y = lti_out.forward(C, cache ? &cache->out_pairs : nullptr);
        if (cache) {
            cache->U = std::move(U);
            cache->Z = std::move(Z);
            cache->A = std::move(A);
            cache->R = std::move(R);
            cache->Zt = std::move(Zt);
            cache->C = C;
        }
        std::vector<Vec> out(T, Vec(static_cast<std::size_t>(N)));
        for (std::size_t t = 0; t < T; ++t) {
            for (int i = 0; i < N; ++i) out[t][static_cast<std::size_t>(i)] = Y[static_cast<std::size_t>(i)][t];
        }
        return out;
    }

    // grad_out time-major (T x N); returns grad wrt the input, time-major
    // (empty when need_input_grad is false, as in training where the branch
    // input is data).
    std::vector<Vec> backward(const Cache& c, const std::vector<Vec>& grad_out,
                              bool need_input_grad = true) {
        const std::size_t T = grad_out.size();
        std::vector<Vec> gY(static_cast<std::size_t>(N), Vec(T));
        for (std::size_t t = 0; t < T; ++t) {
            for (int i = 0; i < N; ++i) gY[static_cast<std::size_t>(i)][t] = grad_out[t][static_cast<std::size_t>(i)];
        }
        std::vector<Vec> gC = lti_out.backward(c.C, gY, &c.out_pairs);
        std::vector<Vec> gZ(static_cast<std::size_t>(2 * N), Vec(T));
        Vec gc_t(static_cast<std::size_t>(N));
        for (std::size_t t = 0; t < T; ++t) {
            for (int i = 0; i < N; ++i) gc_t[static_cast<std::size_t>(i)] = gC[static_cast<std::size_t>(i)][t];
            Vec g = d2.backward(c.R[t], gc_t);
            g = relu_backward(c.A[t], g);
            Vec gz = d1.backward(c.Zt[t], g);
            for (int i = 0; i < 2 * N; ++i) gZ[static_cast<std::size_t>(i)][t] = gz[static_cast<std::size_t>(i)];
        }
        std::vector<Vec> gU = lti_in.backward(c.U, gZ, &c.in_pairs, need_input_grad);
        if (!need_input_grad) return {};
        std::vector<Vec> gX(T, Vec(static_cast<std::size_t>(in_dim)));
        for (std::size_t t = 0; t < T; ++t) {
            for (int i = 0; i < in_dim; ++i) gX[t][static_cast<std::size_t>(i)] = gU[static_cast<std::size_t>(i)][t];
        }
        return gX;
    }

    double max_pole_modulus() const {
        return std::max(lti_in.max_pole_modulus(), lti_out.max_pole_modulus());
    }
};

// ---------------------------------------------------------------------------
// Two independent branches (identical architecture, independent weights):
// one produces position commands, the other velocity commands.
struct DwhModel {
    int N = 0;
    bool augmented = false;  // true: input is 6N + 2N (FIN prediction appended)
    DwhBranch pos_branch, vel_branch;

    DwhModel() = default;
    DwhModel(int N_, bool augmented_)
        : N(N_), augmented(augmented_),
          pos_branch("dwh.pos", augmented_ ? 8 * N_ : 6 * N_, N_),
          vel_branch("dwh.vel", augmented_ ? 8 * N_ : 6 * N_, N_) {}

    // The position branch starts out replaying the next-sample reference
    // positions (input channels 3N..4N-1), the velocity branch the reference
    // velocities (4N..5N-1); see DwhBranch::init.
    void init(Rng& rng) {
        pos_branch.init(rng, 3 * N);
        vel_branch.init(rng, 4 * N);
    }

    std::vector<Parameter*> parameters() {
        auto p = pos_branch.parameters();
        auto v = vel_branch.parameters();
        p.insert(p.end(), v.begin(), v.end());
        return p;
    }

    std::size_t n_params() const { return pos_branch.n_params() + vel_branch.n_params(); }

    std::string fingerprint() const {
        return std::string("dwh(N=") + std::to_string(N) + ",in=" +
               std::to_string(pos_branch.in_dim) + ",nb=2,na=2)";
    }

    struct Cache {
        DwhBranch::Cache pos, vel;
    };

    // Input time-major (T x in_dim), output time-major (T x 2N): [pos, vel].
    std::vector<Vec> forward(const std::vector<Vec>& X, Cache* cache = nullptr) {
        auto yp = pos_branch.forward(X, cache ? &cache->pos : nullptr);
        auto yv = vel_branch.forward(X, cache ? &cache->vel : nullptr);
        std::vector<Vec> out(X.size());
        for (std::size_t t = 0; t < X.size(); ++t) {
            out[t] = yp[t];
            out[t].insert(out[t].end(), yv[t].begin(), yv[t].end());
        }
        return out;
    }

    std::vector<Vec> backward(const Cache& c, const std::vector<Vec>& grad_out,
                              bool need_input_grad = true) {
        std::vector<Vec> gp(grad_out.size()), gv(grad_out.size());
        for (std::size_t t = 0; t < grad_out.size(); ++t) {
            gp[t].assign(grad_out[t].begin(), grad_out[t].begin() + N);
            gv[t].assign(grad_out[t].begin() + N, grad_out[t].end());
        }
        auto gx_p = pos_branch.backward(c.pos, gp, need_input_grad);
        auto gx_v = vel_branch.backward(c.vel, gv, need_input_grad);
        if (!need_input_grad) return {};
        for (std::size_t t = 0; t < gx_p.size(); ++t) {
            for (std::size_t i = 0; i < gx_p[t].size(); ++i) gx_p[t][i] += gx_v[t][i];
        }
        return gx_p;
    }

    double max_pole_modulus() const {
        return std::max(pos_branch.max_pole_modulus(), vel_branch.max_pole_modulus());
    }

    // Standalone (non-augmented) feed-forward command prediction.
    std::vector<Vec> predict_sequence(const Trajectory& desired) {
        if (augmented) throw std::logic_error("DwhModel::predict_sequence: augmented model needs a FIN");
        if (desired.length() < 2) throw std::invalid_argument("predict_sequence: need >= 2 points");
        std::vector<Vec> X;
        X.reserve(desired.length() - 1);
        for (std::size_t t = 0; t + 1 < desired.length(); ++t) X.push_back(model_input(desired, t));
        return forward(X);
    }
};

inline DwhModel build_dwh(int N, bool augmented, Rng& rng) {
    DwhModel m(N, augmented);
    m.init(rng);
    return m;
}

// ---------------------------------------------------------------------------
// FIN-DWH composite: frozen FIN augments the DWH input with the one-step
// prediction of the actual next state.
struct FinDwhModel {
    int N = 0;
    Mlp fin;       // frozen during FIN-DWH training
    DwhModel dwh;  // augmented input 6N + 2N

    FinDwhModel() = default;
    explicit FinDwhModel(int N_) : N(N_), fin("fin", N_), dwh(N_, /*augmented=*/true) {
        freeze_fin();
    }

    void freeze_fin() {
        for (auto* p : fin.parameters()) p->trainable = false;
    }

    void init_dwh(Rng& rng) { dwh.init(rng); }

    std::vector<Parameter*> parameters() {
        auto p = fin.parameters();
        auto d = dwh.parameters();
        p.insert(p.end(), d.begin(), d.end());
        return p;
    }

    std::size_t n_params() const { return fin.n_params() + dwh.n_params(); }

    std::string fingerprint() const {
        return "fin-dwh(N=" + std::to_string(N) + ",in=" + std::to_string(8 * N) + ",nb=2,na=2)";
    }

    // Augment one model input with the FIN prediction: 6N -> 8N.
    Vec augment(const Vec& x, Mlp::Cache* fin_cache = nullptr) const {
        Vec pred = fin.forward(x, fin_cache);
        Vec z = x;
        z.insert(z.end(), pred.begin(), pred.end());
        return z;
    }

    std::vector<Vec> forward(const std::vector<Vec>& X, DwhModel::Cache* cache = nullptr,
                             std::vector<Mlp::Cache>* fin_caches = nullptr) {
        std::vector<Vec> aug(X.size());
        if (fin_caches) fin_caches->resize(X.size());
        for (std::size_t t = 0; t < X.size(); ++t) {
            aug[t] = augment(X[t], fin_caches ? &(*fin_caches)[t] : nullptr);
        }
        return dwh.forward(aug, cache);
    }

    // Full-graph backward: propagates through the frozen FIN as well, so that
    // gradients with respect to FIN weights are observable even though the
    // optimizer never applies them.
    std::vector<Vec> backward(const DwhModel::Cache& cache, const std::vector<Mlp::Cache>& fin_caches,
                              const std::vector<Vec>& grad_out) {
        std::vector<Vec> g_aug = dwh.backward(cache, grad_out);
        std::vector<Vec> gX(g_aug.size());
        for (std::size_t t = 0; t < g_aug.size(); ++t) {
            Vec gx(g_aug[t].begin(), g_aug[t].begin() + 6 * N);
            Vec g_pred(g_aug[t].begin() + 6 * N, g_aug[t].end());
            Vec gx_fin = fin.backward(fin_caches[t], g_pred);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gx_fin[i];
            gX[t] = std::move(gx);
        }
        return gX;
    }

    std::vector<Vec> predict_sequence(const Trajectory& desired) {
        if (desired.length() < 2) throw std::invalid_argument("predict_sequence: need >= 2 points");
        std::vector<Vec> X;
        X.reserve(desired.length() - 1);
        for (std::size_t t = 0; t + 1 < desired.length(); ++t) X.push_back(model_input(desired, t));
        return forward(X);
    }
};

inline FinDwhModel build_fin_dwh(int N, const Mlp& fin_weights, Rng& rng) {
    if (fin_weights.N != N || fin_weights.kind != "fin") {
        throw std::invalid_argument("build_fin_dwh: incompatible FIN weights (" +
                                    fin_weights.fingerprint() + ")");
    }
    FinDwhModel m(N);
    m.fin = fin_weights;
    m.freeze_fin();
    m.init_dwh(rng);
    return m;
}

// ---------------------------------------------------------------------------
// Three-layer RNN baseline.
struct RnnModel {
    int N = 0, hidden = 14;
    RnnCell cell;

    RnnModel() = default;
    RnnModel(int N_, int hidden_) : N(N_), hidden(hidden_), cell(6 * N_, hidden_, 2 * N_) {}

    void init(Rng& rng) { cell.init(rng); }

    std::vector<Parameter*> parameters() { return cell.parameters(); }
    std::size_t n_params() const { return cell.n_params(); }

    std::string fingerprint() const {
        return "rnn(N=" + std::to_string(N) + ",h=" + std::to_string(hidden) + ")";
    }

    // Time-major input (T x 6N) -> time-major output (T x 2N); zero initial state.
    std::vector<Vec> forward(const std::vector<Vec>& X, std::vector<RnnCell::StepCache>* caches = nullptr) const {
        std::vector<Vec> out(X.size());
        Vec h(static_cast<std::size_t>(hidden), 0.0);
        if (caches) caches->resize(X.size());
        for (std::size_t t = 0; t < X.size(); ++t) {
            auto [y, hn] = cell.step(X[t], h, caches ? &(*caches)[t] : nullptr);
            out[t] = std::move(y);
            h = std::move(hn);
        }
        return out;
    }

    void backward(const std::vector<RnnCell::StepCache>& caches, const std::vector<Vec>& grad_out) {
        Vec gh(static_cast<std::size_t>(hidden), 0.0);
        for (std::size_t t = caches.size(); t-- > 0;) {
            auto [gx, gh_prev] = cell.step_backward(caches[t], grad_out[t], gh);
            (void)gx;
            gh = std::move(gh_prev);
        }
    }

    std::vector<Vec> predict_sequence(const Trajectory& desired) const {
        if (desired.length() < 2) throw std::invalid_argument("predict_sequence: need >= 2 points");
        std::vector<Vec> X;
        X.reserve(desired.length() - 1);
        for (std::size_t t = 0; t + 1 < desired.length(); ++t) X.push_back(model_input(desired, t));
        return forward(X);
    }
};

inline RnnModel build_rnn_baseline(int N, int hidden, Rng& rng) {
    RnnModel m(N, hidden);
    m.init(rng);
    return m;
}

}  // namespace flexarm
