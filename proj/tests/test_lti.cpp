#include <catch_amalgamated.hpp>

#include "flexarm/lti.hpp"

using namespace flexarm;

namespace {

Vec random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Vec v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// independent direct recursion, written without reusing the library loop shape
Vec reference_filter(const Vec& b, const Vec& a, const Vec& u) {
    Vec y(u.size(), 0.0);
    for (std::size_t t = 0; t < u.size(); ++t) {
        double acc = 0.0;
        for (std::size_t k = 0; k < b.size(); ++k) {
            if (t >= k) acc += b[k] * u[t - k];
        }
        for (std::size_t j = 0; j < a.size(); ++j) {
            if (t >= j + 1) acc -= a[j] * y[t - j - 1];
        }
        y[t] = acc;
    }
    return y;
}

double dot(const Vec& x, const Vec& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

}  // namespace

TEST_CASE("identity filter passes the signal through") {
    TransferFunction tf{{1.0}, {}};
    Vec u = {3.0, -1.0, 0.5, 2.0};
    REQUIRE(siso_filter_forward(tf, u) == u);
}

TEST_CASE("pure delay shifts by one sample") {
    TransferFunction tf{{0.0, 1.0}, {}};
    Vec u = {3.0, -1.0, 0.5, 2.0};
    Vec y = siso_filter_forward(tf, u);
    REQUIRE(y == Vec{0.0, 3.0, -1.0, 0.5});
}

TEST_CASE("first-order lowpass matches the hand recursion") {
    // y(t) = 0.5 u(t) + 0.9 y(t-1) -> b = {0.5}, a = {-0.9}
    TransferFunction tf{{0.5}, {-0.9}};
    Vec u = {1.0, 0.0, 0.0, 0.0, 1.0};
    Vec y = siso_filter_forward(tf, u);
    Vec expect = {0.5, 0.45, 0.405, 0.3645, 0.82805};
    for (std::size_t t = 0; t < y.size(); ++t) REQUIRE(y[t] == Catch::Approx(expect[t]).epsilon(1e-14));
}

TEST_CASE("forward agrees with an independent reference on random instances") {
    Rng rng(7);
    std::uniform_int_distribution<int> len(10, 100), nb(1, 4), na(0, 3);
    for (int it = 0; it < 50; ++it) {
        TransferFunction tf{random_vec(rng, static_cast<std::size_t>(nb(rng)), 0.5),
                            random_vec(rng, static_cast<std::size_t>(na(rng)), 0.3)};
        Vec u = random_vec(rng, static_cast<std::size_t>(len(rng)));
        Vec y = siso_filter_forward(tf, u);
        Vec r = reference_filter(tf.b, tf.a, u);
        for (std::size_t t = 0; t < y.size(); ++t) REQUIRE(y[t] == Catch::Approx(r[t]).margin(1e-12));
    }
}

TEST_CASE("filter is linear in the input") {
    Rng rng(11);
    TransferFunction tf{random_vec(rng, 3, 0.5), random_vec(rng, 2, 0.3)};
    Vec u1 = random_vec(rng, 40), u2 = random_vec(rng, 40);
    const double alpha = 1.7, beta = -0.4;
    Vec mixed(40);
    for (std::size_t t = 0; t < 40; ++t) mixed[t] = alpha * u1[t] + beta * u2[t];
    Vec y1 = siso_filter_forward(tf, u1);
    Vec y2 = siso_filter_forward(tf, u2);
    Vec ym = siso_filter_forward(tf, mixed);
    for (std::size_t t = 0; t < 40; ++t) {
        REQUIRE(ym[t] == Catch::Approx(alpha * y1[t] + beta * y2[t]).margin(1e-12));
    }
}

TEST_CASE("output equals convolution with the impulse response") {
    Rng rng(13);
    TransferFunction tf{random_vec(rng, 2, 0.5), {-0.6, 0.08}};
    const std::size_t T = 60;
    Vec u = random_vec(rng, T);
    Vec h = impulse_response(tf, T);
    Vec y = siso_filter_forward(tf, u);
    for (std::size_t t = 0; t < T; ++t) {
        double conv = 0.0;
        for (std::size_t k = 0; k <= t; ++k) conv += h[k] * u[t - k];
        REQUIRE(y[t] == Catch::Approx(conv).margin(1e-10));
    }
}

TEST_CASE("adjoint identity <Gu, v> == <u, G'v>") {
    Rng rng(17);
    for (int it = 0; it < 20; ++it) {
        TransferFunction tf{random_vec(rng, 3, 0.5), random_vec(rng, 3, 0.2)};
        Vec u = random_vec(rng, 50), v = random_vec(rng, 50);
        Vec y = siso_filter_forward(tf, u);
        SisoGrads g = siso_filter_backward(tf, u, y, v);
        const double lhs = dot(y, v);
        const double rhs = dot(u, g.grad_u);
        REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("SISO coefficient and input gradients pass finite differences") {
    Rng rng(19);
    std::uniform_int_distribution<int> len(10, 100), nb(1, 3), na(0, 3);
    const double eps = 1e-6;
    for (int it = 0; it < 60; ++it) {
        TransferFunction tf{random_vec(rng, static_cast<std::size_t>(nb(rng)), 0.5),
                            random_vec(rng, static_cast<std::size_t>(na(rng)), 0.2)};
        const std::size_t T = static_cast<std::size_t>(len(rng));
        Vec u = random_vec(rng, T);
        Vec w = random_vec(rng, T);  // loss = <w, y>
        Vec y = siso_filter_forward(tf, u);
        SisoGrads g = siso_filter_backward(tf, u, y, w);

        auto loss = [&](const TransferFunction& f, const Vec& uu) {
            return dot(w, siso_filter_forward(f, uu));
        };
        auto check = [&](double analytic, double numeric) {
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            REQUIRE(std::abs(analytic - numeric) / denom < 1e-4);
        };
        for (std::size_t k = 0; k < tf.b.size(); ++k) {
            TransferFunction fp = tf, fm = tf;
            fp.b[k] += eps;
            fm.b[k] -= eps;
            check(g.grad_b[k], (loss(fp, u) - loss(fm, u)) / (2 * eps));
        }
        for (std::size_t j = 0; j < tf.a.size(); ++j) {
            TransferFunction fp = tf, fm = tf;
            fp.a[j] += eps;
            fm.a[j] -= eps;
            check(g.grad_a[j], (loss(fp, u) - loss(fm, u)) / (2 * eps));
        }
        for (std::size_t t = 0; t < T; t += 7) {
            Vec up = u, um = u;
            up[t] += eps;
            um[t] -= eps;
            check(g.grad_u[t], (loss(tf, up) - loss(tf, um)) / (2 * eps));
        }
    }
}

TEST_CASE("pole moduli match the factored denominator") {
    // A(q) = 1 - q^-1 + 0.25 q^-2 = (1 - 0.5 q^-1)^2 -> double pole at 0.5
    TransferFunction tf{{1.0}, {-1.0, 0.25}};
    Vec mods = pole_moduli(tf);
    REQUIRE(mods.size() == 2);
    REQUIRE(mods[0] == Catch::Approx(0.5).margin(1e-9));
    REQUIRE(mods[1] == Catch::Approx(0.5).margin(1e-9));

    // complex pair: A(q) = 1 - 1.2 q^-1 + 0.72 q^-2, |p| = sqrt(0.72)
    TransferFunction tf2{{1.0}, {-1.2, 0.72}};
    Vec m2 = pole_moduli(tf2);
    REQUIRE(m2[0] == Catch::Approx(std::sqrt(0.72)).margin(1e-9));
    REQUIRE(m2[1] == Catch::Approx(std::sqrt(0.72)).margin(1e-9));

    REQUIRE(pole_moduli(TransferFunction{{1.0}, {}}).empty());
}

TEST_CASE("MIMO layer parameter count is out*in*(nb+na)") {
    Rng rng(23);
    MimoLtiLayer layer = make_mimo_layer(5, 3, 2, 2, rng);
    REQUIRE(layer.n_params() == 5u * 3u * 4u);
}

TEST_CASE("MIMO forward sums per-pair SISO responses") {
    Rng rng(29);
    MimoLtiLayer layer = make_mimo_layer(3, 2, 2, 2, rng, 0.3);
    std::vector<Vec> U = {random_vec(rng, 30), random_vec(rng, 30), random_vec(rng, 30)};
    std::vector<Vec> Y = mimo_lti_forward(layer, U);
    for (int o = 0; o < 2; ++o) {
        Vec expect(30, 0.0);
        for (int i = 0; i < 3; ++i) {
            Vec yi = reference_filter(layer.at(o, i).b, layer.at(o, i).a, U[static_cast<std::size_t>(i)]);
            for (std::size_t t = 0; t < 30; ++t) expect[t] += yi[t];
        }
        for (std::size_t t = 0; t < 30; ++t) {
            REQUIRE(Y[static_cast<std::size_t>(o)][t] == Catch::Approx(expect[t]).margin(1e-12));
        }
    }
}

TEST_CASE("MIMO gradients pass finite differences") {
    Rng rng(31);
    const double eps = 1e-6;
    for (int it = 0; it < 10; ++it) {
        MimoLtiLayer layer = make_mimo_layer(2, 2, 2, 2, rng, 0.3);
        const std::size_t T = 25;
        std::vector<Vec> U = {random_vec(rng, T), random_vec(rng, T)};
        std::vector<Vec> W = {random_vec(rng, T), random_vec(rng, T)};
        auto loss = [&](const MimoLtiLayer& l, const std::vector<Vec>& Uu) {
            auto Y = mimo_lti_forward(l, Uu);
            double acc = 0.0;
            for (std::size_t o = 0; o < Y.size(); ++o) acc += dot(Y[o], W[o]);
            return acc;
        };
        MimoGrads g = mimo_lti_backward(layer, U, W);
        auto check = [&](double analytic, double numeric) {
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            REQUIRE(std::abs(analytic - numeric) / denom < 1e-4);
        };
        for (std::size_t f = 0; f < layer.filters.size(); ++f) {
            for (std::size_t k = 0; k < 2; ++k) {
                MimoLtiLayer lp = layer, lm = layer;
                lp.filters[f].b[k] += eps;
                lm.filters[f].b[k] -= eps;
                check(g.grad_b[f][k], (loss(lp, U) - loss(lm, U)) / (2 * eps));
                lp = layer;
                lm = layer;
                lp.filters[f].a[k] += eps;
                lm.filters[f].a[k] -= eps;
                check(g.grad_a[f][k], (loss(lp, U) - loss(lm, U)) / (2 * eps));
            }
        }
        for (std::size_t i = 0; i < U.size(); ++i) {
            for (std::size_t t = 0; t < T; t += 5) {
                auto Up = U, Um = U;
                Up[i][t] += eps;
                Um[i][t] -= eps;
                check(g.grad_U[i][t], (loss(layer, Up) - loss(layer, Um)) / (2 * eps));
            }
        }
    }
}

TEST_CASE("shape violations are rejected") {
    REQUIRE_THROWS_AS(TransferFunction({}, {0.5}), std::invalid_argument);
    Rng rng(37);
    MimoLtiLayer layer = make_mimo_layer(2, 2, 2, 2, rng);
    std::vector<Vec> bad = {Vec(10, 0.0)};  // one channel instead of two
    REQUIRE_THROWS_AS(mimo_lti_forward(layer, bad), std::invalid_argument);
    std::vector<Vec> ragged = {Vec(10, 0.0), Vec(9, 0.0)};
    REQUIRE_THROWS_AS(mimo_lti_forward(layer, ragged), std::invalid_argument);
}
