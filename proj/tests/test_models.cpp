#include <catch_amalgamated.hpp>

#include "flexarm/models.hpp"

using namespace flexarm;

namespace {

Trajectory ramp_trajectory(int N, std::size_t T) {
    Trajectory d;
    d.joints = N;
    d.dt = 0.05;
    d.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        for (int n = 0; n < N; ++n) {
            d.pos[t][static_cast<std::size_t>(n)] = 0.1 * static_cast<double>(t) + n;
            d.vel[t][static_cast<std::size_t>(n)] = 0.01 * static_cast<double>(t) - n;
            d.acc[t][static_cast<std::size_t>(n)] = 0.001 * static_cast<double>(t) + 10 * n;
        }
    }
    return d;
}

std::size_t mlp_param_formula(int N) {
    return static_cast<std::size_t>(6 * N * 64 + 64 + 64 * 32 + 32 + 32 * 2 * N + 2 * N);
}

std::size_t branch_param_formula(int in_dim, int N) {
    return static_cast<std::size_t>(in_dim * 2 * N * 4 + (2 * N * 32 + 32) + (32 * N + N) + N * N * 4);
}

std::vector<Vec> random_inputs(Rng& rng, std::size_t T, int width) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<Vec> X(T, Vec(static_cast<std::size_t>(width)));
    for (auto& x : X)
        for (auto& v : x) v = d(rng);
    return X;
}

}  // namespace

TEST_CASE("seven-joint builds reproduce the published parameter counts") {
    Rng rng(1);
    REQUIRE(build_fin(7, rng).n_params() == 5294);
    REQUIRE(build_fc_baseline(7, rng).n_params() == 5294);

    DwhModel aug = build_dwh(7, /*augmented=*/true, rng);
    REQUIRE(aug.pos_branch.n_params() == 4043);
    REQUIRE(aug.vel_branch.n_params() == 4043);
    REQUIRE(aug.n_params() == 8086);

    DwhModel standalone = build_dwh(7, /*augmented=*/false, rng);
    REQUIRE(standalone.n_params() == 6518);

    FinDwhModel composite = build_fin_dwh(7, build_fin(7, rng), rng);
    REQUIRE(composite.n_params() == 5294 + 8086);
}

TEST_CASE("parameter counts follow the closed-form scaling in N") {
    Rng rng(2);
    for (int N : {1, 2, 3, 5, 7}) {
        REQUIRE(build_fin(N, rng).n_params() == mlp_param_formula(N));
        DwhModel aug = build_dwh(N, true, rng);
        REQUIRE(aug.pos_branch.n_params() == branch_param_formula(8 * N, N));
        DwhModel st = build_dwh(N, false, rng);
        REQUIRE(st.pos_branch.n_params() == branch_param_formula(6 * N, N));
        RnnModel rnn = build_rnn_baseline(N, 14, rng);
        const int z = 6 * N + 14;
        REQUIRE(rnn.n_params() == static_cast<std::size_t>(z * 64 + 64 + 64 * 32 + 32 + 32 * 2 * N + 2 * N +
                                                            z * 32 + 32 + 32 * 14 + 14));
    }
}

TEST_CASE("model input stacks two consecutive desired states") {
    Trajectory d = ramp_trajectory(2, 5);
    Vec x = model_input(d, 1);
    REQUIRE(x.size() == 12);
    Vec expect = {d.pos[1][0], d.pos[1][1], d.vel[1][0], d.vel[1][1], d.acc[1][0], d.acc[1][1],
                  d.pos[2][0], d.pos[2][1], d.vel[2][0], d.vel[2][1], d.acc[2][0], d.acc[2][1]};
    REQUIRE(x == expect);
    REQUIRE_THROWS_AS(model_input(d, 4), std::out_of_range);
}

TEST_CASE("zero-weight mlp maps everything to zero") {
    Mlp m("fin", 3);  // constructed but not initialized: all weights zero
    Vec y = m.forward(Vec(18, 1.5));
    REQUIRE(y == Vec(6, 0.0));
}

TEST_CASE("mlp gradient passes finite differences through both relus") {
    Rng rng(3);
    Mlp m = build_fin(1, rng);
    std::normal_distribution<double> d(0.0, 1.0);
    Vec x(6), w(2);
    for (auto& v : x) v = d(rng);
    for (auto& v : w) v = d(rng);
    Mlp::Cache cache;
    m.forward(x, &cache);
    m.backward(cache, w);
    auto loss = [&](const Mlp& mm) {
        Vec y = mm.forward(x);
        return w[0] * y[0] + w[1] * y[1];
    };
    const double eps = 1e-6;
    for (auto [get, name] : std::initializer_list<std::pair<Parameter & (*)(Mlp&), const char*>>{
             {+[](Mlp& mm) -> Parameter& { return mm.l1.W; }, "l1.W"},
             {+[](Mlp& mm) -> Parameter& { return mm.l2.W; }, "l2.W"},
             {+[](Mlp& mm) -> Parameter& { return mm.l3.W; }, "l3.W"},
             {+[](Mlp& mm) -> Parameter& { return mm.l2.b; }, "l2.b"}}) {
        INFO(name);
        Parameter& p = get(m);
        for (std::size_t i = 0; i < p.size(); i += std::max<std::size_t>(1, p.size() / 5)) {
            Mlp mp = m, mm2 = m;
            get(mp).value[i] += eps;
            get(mm2).value[i] -= eps;
            const double num = (loss(mp) - loss(mm2)) / (2 * eps);
            REQUIRE(p.grad[i] == Catch::Approx(num).epsilon(1e-4).margin(1e-7));
        }
    }
}

TEST_CASE("dwh branch gradient passes finite differences") {
    Rng rng(5);
    DwhBranch branch("b", 6, 1);
    branch.init(rng);
    std::vector<Vec> X = random_inputs(rng, 6, 6);
    std::vector<Vec> W = random_inputs(rng, 6, 1);
    DwhBranch::Cache cache;
    branch.forward(X, &cache);
    std::vector<Vec> gX = branch.backward(cache, W);
    auto loss = [&](DwhBranch& b, const std::vector<Vec>& XX) {
        auto Y = b.forward(XX);
        double acc = 0.0;
        for (std::size_t t = 0; t < Y.size(); ++t) acc += W[t][0] * Y[t][0];
        return acc;
    };
    const double eps = 1e-6;
    auto check = [&](double analytic, double numeric) {
        REQUIRE(analytic == Catch::Approx(numeric).epsilon(1e-4).margin(1e-7));
    };
    auto params = branch.parameters();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (std::size_t i = 0; i < p.size(); i += std::max<std::size_t>(1, p.size() / 4)) {
            DwhBranch bp = branch, bm = branch;
            bp.parameters()[pi]->value[i] += eps;
            bm.parameters()[pi]->value[i] -= eps;
            check(p.grad[i], (loss(bp, X) - loss(bm, X)) / (2 * eps));
        }
    }
    for (std::size_t t = 0; t < X.size(); ++t) {
        for (std::size_t i = 0; i < X[t].size(); i += 3) {
            auto Xp = X, Xm = X;
            Xp[t][i] += eps;
            Xm[t][i] -= eps;
            check(gX[t][i], (loss(branch, Xp) - loss(branch, Xm)) / (2 * eps));
        }
    }
}

TEST_CASE("dwh output concatenates the position and velocity branches") {
    Rng rng(7);
    DwhModel m = build_dwh(2, false, rng);
    std::vector<Vec> X = random_inputs(rng, 4, 12);
    auto full = m.forward(X);
    auto yp = m.pos_branch.forward(X);
    auto yv = m.vel_branch.forward(X);
    for (std::size_t t = 0; t < X.size(); ++t) {
        REQUIRE(full[t].size() == 4);
        REQUIRE(full[t][0] == yp[t][0]);
        REQUIRE(full[t][1] == yp[t][1]);
        REQUIRE(full[t][2] == yv[t][0]);
        REQUIRE(full[t][3] == yv[t][1]);
    }
}

TEST_CASE("dwh is causal: perturbing a later input leaves earlier outputs unchanged") {
    Rng rng(9);
    DwhModel m = build_dwh(1, false, rng);
    std::vector<Vec> X = random_inputs(rng, 10, 6);
    auto y0 = m.forward(X);
    auto X2 = X;
    X2[6][2] += 5.0;
    auto y1 = m.forward(X2);
    for (std::size_t t = 0; t < 6; ++t) REQUIRE(y0[t] == y1[t]);
    REQUIRE(y0[6] != y1[6]);
}

TEST_CASE("dwh forward is stateless across calls (zero state at sequence start)") {
    Rng rng(11);
    DwhModel m = build_dwh(1, false, rng);
    std::vector<Vec> X = random_inputs(rng, 8, 6);
    auto first = m.forward(X);
    auto second = m.forward(X);
    REQUIRE(first == second);
    // a prefix run matches the prefix of the full run
    std::vector<Vec> prefix(X.begin(), X.begin() + 3);
    auto yp = m.forward(prefix);
    for (std::size_t t = 0; t < 3; ++t) REQUIRE(yp[t] == first[t]);
}

TEST_CASE("fin-dwh composite equals separately-augmented standalone dwh") {
    Rng rng(13);
    const int N = 2;
    Mlp fin = build_fin(N, rng);
    FinDwhModel composite = build_fin_dwh(N, fin, rng);
    Trajectory d = ramp_trajectory(N, 6);
    auto got = composite.predict_sequence(d);

    std::vector<Vec> X;
    for (std::size_t t = 0; t + 1 < d.length(); ++t) {
        Vec x = model_input(d, t);
        Vec pred = fin.forward(x);
        x.insert(x.end(), pred.begin(), pred.end());
        X.push_back(std::move(x));
    }
    auto expect = composite.dwh.forward(X);
    REQUIRE(got == expect);
}

TEST_CASE("fin-dwh builder rejects incompatible fin weights") {
    Rng rng(15);
    Mlp fin3 = build_fin(3, rng);
    REQUIRE_THROWS_AS(build_fin_dwh(2, fin3, rng), std::invalid_argument);
    Mlp fc = build_fc_baseline(3, rng);
    REQUIRE_THROWS_AS(build_fin_dwh(3, fc, rng), std::invalid_argument);
}

TEST_CASE("fin-dwh backward reaches frozen fin weights without updating them") {
    Rng rng(17);
    const int N = 1;
    Mlp fin = build_fin(N, rng);
    FinDwhModel m = build_fin_dwh(N, fin, rng);
    std::vector<Vec> X = random_inputs(rng, 4, 6);
    DwhModel::Cache cache;
    std::vector<Mlp::Cache> fin_caches;
    auto y = m.forward(X, &cache, &fin_caches);
    std::vector<Vec> grads(y.size(), Vec(2, 1.0));
    m.backward(cache, fin_caches, grads);

    double fin_grad_norm = 0.0;
    for (auto* p : m.fin.parameters()) {
        REQUIRE_FALSE(p->trainable);
        for (double g : p->grad) fin_grad_norm += std::abs(g);
    }
    REQUIRE(fin_grad_norm > 0.0);  // gradient flows through the frozen block
}

TEST_CASE("augmented dwh refuses standalone prediction") {
    Rng rng(19);
    DwhModel m = build_dwh(2, true, rng);
    Trajectory d = ramp_trajectory(2, 4);
    REQUIRE_THROWS_AS(m.predict_sequence(d), std::logic_error);
}

TEST_CASE("rnn forward carries state and starts from zero") {
    Rng rng(21);
    RnnModel m = build_rnn_baseline(1, 4, rng);
    std::vector<Vec> X = random_inputs(rng, 5, 6);
    auto y = m.forward(X);
    REQUIRE(y.size() == 5);
    // determinism / zero initial state: rerun matches
    REQUIRE(m.forward(X) == y);
    // state actually matters: perturbing x0 changes later outputs
    auto X2 = X;
    X2[0][0] += 1.0;
    auto y2 = m.forward(X2);
    REQUIRE(y2[2] != y[2]);
}

TEST_CASE("fingerprints distinguish architectures") {
    Rng rng(23);
    REQUIRE(build_fin(3, rng).fingerprint() != build_fc_baseline(3, rng).fingerprint());
    REQUIRE(build_dwh(3, true, rng).fingerprint() != build_dwh(3, false, rng).fingerprint());
    REQUIRE(build_rnn_baseline(3, 14, rng).fingerprint() != build_rnn_baseline(3, 8, rng).fingerprint());
}
