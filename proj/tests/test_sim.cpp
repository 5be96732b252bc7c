#include <Eigen/Eigenvalues>
#include <catch_amalgamated.hpp>

#include "flexarm/sim.hpp"

using namespace flexarm;

namespace {

Vec random_config(Rng& rng, int N, double scale = M_PI) {
    std::uniform_real_distribution<double> d(-scale, scale);
    Vec q(static_cast<std::size_t>(N));
    for (auto& x : q) x = d(rng);
    return q;
}

// Kinetic energy from first principles: per-link COM velocity via the chain
// rule on absolute angles, never touching the mass-matrix code path.
double kinetic_energy_oracle(const ArmConfig& cfg, const Vec& q, const Vec& qd, double payload) {
    const int N = cfg.N;
    Vec phi(q.size()), phid(q.size());
    double s = 0.0, sd = 0.0;
    for (int i = 0; i < N; ++i) {
        s += q[static_cast<std::size_t>(i)];
        sd += qd[static_cast<std::size_t>(i)];
        phi[static_cast<std::size_t>(i)] = s;
        phid[static_cast<std::size_t>(i)] = sd;
    }
    double ke = 0.0;
    double bx = 0.0, by = 0.0;  // joint-origin velocity accumulators
    for (int i = 0; i < N; ++i) {
        const double lc = cfg.com[static_cast<std::size_t>(i)];
        const double vx = bx - lc * std::sin(phi[static_cast<std::size_t>(i)]) * phid[static_cast<std::size_t>(i)];
        const double vy = by + lc * std::cos(phi[static_cast<std::size_t>(i)]) * phid[static_cast<std::size_t>(i)];
        ke += 0.5 * cfg.mass[static_cast<std::size_t>(i)] * (vx * vx + vy * vy);
        ke += 0.5 * cfg.inertia[static_cast<std::size_t>(i)] * phid[static_cast<std::size_t>(i)] * phid[static_cast<std::size_t>(i)];
        const double l = cfg.length[static_cast<std::size_t>(i)];
        bx += -l * std::sin(phi[static_cast<std::size_t>(i)]) * phid[static_cast<std::size_t>(i)];
        by += l * std::cos(phi[static_cast<std::size_t>(i)]) * phid[static_cast<std::size_t>(i)];
    }
    if (payload > 0.0) ke += 0.5 * payload * (bx * bx + by * by);
    return ke;
}

Trajectory constant_trajectory(const ArmConfig& cfg, const Vec& q, std::size_t T) {
    Trajectory traj;
    traj.joints = cfg.N;
    traj.dt = cfg.command_dt();
    traj.resize(T);
    for (std::size_t t = 0; t < T; ++t) traj.pos[t] = q;
    return traj;
}

}  // namespace

TEST_CASE("single link matches the closed-form pendulum") {
    ArmConfig cfg = ArmConfig::defaults(1);
    cfg.mass = {1.3};
    cfg.length = {0.6};
    cfg.com = {0.25};
    cfg.inertia = {0.04};
    Rng rng(61);
    for (int it = 0; it < 20; ++it) {
        Vec q = random_config(rng, 1);
        Eigen::MatrixXd M = mass_matrix(cfg, q);
        REQUIRE(M(0, 0) == Catch::Approx(0.04 + 1.3 * 0.25 * 0.25).margin(1e-12));
        Eigen::VectorXd g = gravity_torque(cfg, q);
        REQUIRE(g[0] == Catch::Approx(1.3 * cfg.gravity * 0.25 * std::cos(q[0])).margin(1e-12));
        // single planar link: mass matrix is configuration-independent, no Coriolis
        Eigen::VectorXd c = coriolis_torque(cfg, q, {1.7});
        REQUIRE(c[0] == Catch::Approx(0.0).margin(1e-6));
    }
    // payload at the tip
    Eigen::MatrixXd Mp = mass_matrix(cfg, {0.3}, 1.0, 2.0);
    REQUIRE(Mp(0, 0) == Catch::Approx(0.04 + 1.3 * 0.0625 + 2.0 * 0.36).margin(1e-12));
}

TEST_CASE("mass matrix agrees with the kinetic-energy polarization oracle") {
    ArmConfig cfg = ArmConfig::defaults(3);
    Rng rng(67);
    for (int it = 0; it < 25; ++it) {
        Vec q = random_config(rng, 3);
        const double payload = (it % 2) ? 0.8 : 0.0;
        Eigen::MatrixXd M = mass_matrix(cfg, q, 1.0, payload);
        for (int i = 0; i < 3; ++i) {
            Vec ei(3, 0.0);
            ei[static_cast<std::size_t>(i)] = 1.0;
            REQUIRE(M(i, i) == Catch::Approx(2.0 * kinetic_energy_oracle(cfg, q, ei, payload)).margin(1e-9));
            for (int j = i + 1; j < 3; ++j) {
                Vec eij(3, 0.0);
                eij[static_cast<std::size_t>(i)] = 1.0;
                eij[static_cast<std::size_t>(j)] = 1.0;
                const double mij = kinetic_energy_oracle(cfg, q, eij, payload) -
                                   kinetic_energy_oracle(cfg, q, ei, payload) -
                                   kinetic_energy_oracle(cfg, q, [&] {
                                       Vec ej(3, 0.0);
                                       ej[static_cast<std::size_t>(j)] = 1.0;
                                       return ej;
                                   }(), payload);
                REQUIRE(M(i, j) == Catch::Approx(mij).margin(1e-9));
            }
        }
    }
}

TEST_CASE("mass matrix is symmetric positive definite") {
    ArmConfig cfg = ArmConfig::defaults(4);
    Rng rng(71);
    for (int it = 0; it < 200; ++it) {
        Vec q = random_config(rng, 4);
        Eigen::MatrixXd M = mass_matrix(cfg, q);
        REQUIRE((M - M.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
        REQUIRE(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("gravity torque is the gradient of the potential") {
    ArmConfig cfg = ArmConfig::defaults(3);
    Rng rng(73);
    auto potential = [&](const Vec& q, double payload) {
        double phi = 0.0, yb = 0.0, u = 0.0;
        for (int i = 0; i < cfg.N; ++i) {
            phi += q[static_cast<std::size_t>(i)];
            u += cfg.mass[static_cast<std::size_t>(i)] * cfg.gravity *
                 (yb + cfg.com[static_cast<std::size_t>(i)] * std::sin(phi));
            yb += cfg.length[static_cast<std::size_t>(i)] * std::sin(phi);
        }
        return u + payload * cfg.gravity * yb;
    };
    const double eps = 1e-6;
    for (int it = 0; it < 20; ++it) {
        Vec q = random_config(rng, 3);
        const double payload = (it % 2) ? 1.1 : 0.0;
        Eigen::VectorXd g = gravity_torque(cfg, q, 1.0, payload);
        for (int i = 0; i < 3; ++i) {
            Vec qp = q, qm = q;
            qp[static_cast<std::size_t>(i)] += eps;
            qm[static_cast<std::size_t>(i)] -= eps;
            const double num = (potential(qp, payload) - potential(qm, payload)) / (2 * eps);
            REQUIRE(g[i] == Catch::Approx(num).margin(1e-6));
        }
    }
}

TEST_CASE("coriolis torques satisfy the power identity qd' (Mdot - 2C-equivalent) qd = 0") {
    // equivalent check: d/dt KE = qd' tau when gravity/damping are absent, so
    // qd' c(q, qd) must equal qd' Mdot qd / 2
    ArmConfig cfg = ArmConfig::defaults(3);
    Rng rng(79);
    const double eps = 1e-6;
    for (int it = 0; it < 15; ++it) {
        Vec q = random_config(rng, 3), qd = random_config(rng, 3, 1.0);
        Eigen::VectorXd c = coriolis_torque(cfg, q, qd);
        // Mdot via directional finite difference along qd
        Vec qp = q, qm = q;
        for (int i = 0; i < 3; ++i) {
            qp[static_cast<std::size_t>(i)] += eps * qd[static_cast<std::size_t>(i)];
            qm[static_cast<std::size_t>(i)] -= eps * qd[static_cast<std::size_t>(i)];
        }
        Eigen::MatrixXd Mdot = (mass_matrix(cfg, qp) - mass_matrix(cfg, qm)) / (2 * eps);
        Eigen::Map<const Eigen::VectorXd> v(qd.data(), 3);
        REQUIRE(v.dot(c) == Catch::Approx(0.5 * v.dot(Mdot * v)).margin(1e-4));
    }
}

TEST_CASE("forward kinematics matches a homogeneous-transform chain") {
    ArmConfig cfg = ArmConfig::defaults(3);
    Rng rng(83);
    for (int it = 0; it < 50; ++it) {
        Vec q = random_config(rng, 3);
        Eigen::Matrix3d T = Eigen::Matrix3d::Identity();
        for (int i = 0; i < 3; ++i) {
            const double a = q[static_cast<std::size_t>(i)];
            Eigen::Matrix3d R;
            R << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
            Eigen::Matrix3d L = Eigen::Matrix3d::Identity();
            L(0, 2) = cfg.length[static_cast<std::size_t>(i)];
            T = T * R * L;
        }
        auto p = forward_kinematics(cfg, q);
        REQUIRE(p[0] == Catch::Approx(T(0, 2)).margin(1e-12));
        REQUIRE(p[1] == Catch::Approx(T(1, 2)).margin(1e-12));
    }
}

TEST_CASE("undamped free motion conserves energy") {
    ArmConfig cfg = ArmConfig::defaults(2);
    cfg.damp_link = {0.0, 0.0};
    cfg.damp_motor = {0.0, 0.0};
    SimState s = SimState::zero(2);
    s.q = {-1.0, 0.4};
    s.th_m = {-1.1, 0.5};
    s.qd = {0.3, -0.2};
    const double e0 = total_energy(cfg, s);
    Vec zero_tau(2, 0.0);
    for (int step = 0; step < 1000; ++step) s = step_dynamics(cfg, s, zero_tau);
    const double e1 = total_energy(cfg, s);
    REQUIRE(std::abs(e1 - e0) / std::max(1.0, std::abs(e0)) < 1e-3);
}

TEST_CASE("damped free motion dissipates energy monotonically") {
    ArmConfig cfg = ArmConfig::defaults(2);
    SimState s = SimState::zero(2);
    s.q = {-1.2, 0.6};
    s.th_m = {-1.2, 0.6};
    s.qd = {0.5, -0.4};
    Vec zero_tau(2, 0.0);
    double prev = total_energy(cfg, s);
    for (int step = 0; step < 500; ++step) {
        s = step_dynamics(cfg, s, zero_tau);
        const double e = total_energy(cfg, s);
        REQUIRE(e <= prev + 1e-9);
        prev = e;
    }
}

TEST_CASE("stiff springs recover the rigid-body limit") {
    ArmConfig cfg = ArmConfig::defaults(2);
    cfg.stiffness = {1e6, 1e6};
    cfg.dt_sim = 1e-4;  // spring natural frequency ~4.5 krad/s needs a fine step
    cfg.damp_link = {0.0, 0.0};
    cfg.damp_motor = {0.0, 0.0};

    // open-loop torque profile applied to both the flexible plant and an
    // independent rigid integrator with lumped inertia M(q) + J
    auto torque_at = [&](double t) {
        return Vec{2.0 * std::sin(2.0 * t), 1.0 * std::cos(3.0 * t)};
    };

    SimState flex = SimState::zero(2);
    flex.q = {-M_PI / 2.0, 0.0};
    flex.th_m = flex.q;

    Vec rq = flex.q, rqd = {0.0, 0.0};
    const double h = cfg.dt_sim;
    auto rigid_accel = [&](const Vec& q, const Vec& qd, const Vec& tau) {
        Eigen::MatrixXd M = mass_matrix(cfg, q);
        for (int i = 0; i < 2; ++i) M(i, i) += cfg.motor_inertia[static_cast<std::size_t>(i)];
        Eigen::VectorXd rhs(2);
        Eigen::VectorXd c = coriolis_torque(cfg, q, qd);
        Eigen::VectorXd g = gravity_torque(cfg, q);
        for (int i = 0; i < 2; ++i) rhs[i] = tau[static_cast<std::size_t>(i)] - c[i] - g[i];
        Eigen::VectorXd qdd = M.ldlt().solve(rhs);
        return Vec{qdd[0], qdd[1]};
    };
    auto rigid_step = [&](Vec& q, Vec& qd, const Vec& tau) {
        // RK4 on the rigid model
        struct K { Vec qd, qdd; };
        auto eval = [&](const Vec& qq, const Vec& qqd) { return K{qqd, rigid_accel(qq, qqd, tau)}; };
        auto adv = [&](const Vec& qq, const Vec& qqd, const K& k, double dt) {
            Vec nq = qq, nqd = qqd;
            for (int i = 0; i < 2; ++i) {
                nq[static_cast<std::size_t>(i)] += dt * k.qd[static_cast<std::size_t>(i)];
                nqd[static_cast<std::size_t>(i)] += dt * k.qdd[static_cast<std::size_t>(i)];
            }
            return std::pair<Vec, Vec>(nq, nqd);
        };
        K k1 = eval(q, qd);
        auto [q2, qd2] = adv(q, qd, k1, h / 2);
        K k2 = eval(q2, qd2);
        auto [q3, qd3] = adv(q, qd, k2, h / 2);
        K k3 = eval(q3, qd3);
        auto [q4, qd4] = adv(q, qd, k3, h);
        K k4 = eval(q4, qd4);
        for (int i = 0; i < 2; ++i) {
            const auto u = static_cast<std::size_t>(i);
            q[u] += h / 6.0 * (k1.qd[u] + 2 * k2.qd[u] + 2 * k3.qd[u] + k4.qd[u]);
            qd[u] += h / 6.0 * (k1.qdd[u] + 2 * k2.qdd[u] + 2 * k3.qdd[u] + k4.qdd[u]);
        }
    };

    double worst = 0.0;
    const int steps = 10000;  // 1 s
    for (int step = 0; step < steps; ++step) {
        Vec tau = torque_at(step * h);
        flex = step_dynamics(cfg, flex, tau);
        rigid_step(rq, rqd, tau);
        for (int i = 0; i < 2; ++i) {
            worst = std::max(worst, std::abs(flex.q[static_cast<std::size_t>(i)] - rq[static_cast<std::size_t>(i)]));
        }
    }
    REQUIRE(worst < 1e-3);
}

TEST_CASE("simulation is bitwise deterministic") {
    ArmConfig cfg = ArmConfig::defaults(3);
    Rng rng(89);
    Trajectory traj = generate_functional_trajectory(rng, cfg, 0.8);
    ExecutionRecord a = execute_trajectory(cfg, traj);
    ExecutionRecord b = execute_trajectory(cfg, traj);
    REQUIRE(a.actual.pos == b.actual.pos);
    REQUIRE(a.actual.vel == b.actual.vel);
    REQUIRE(a.actual.acc == b.actual.acc);
}

TEST_CASE("generated trajectories are rest-to-rest and speed-bounded") {
    ArmConfig cfg = ArmConfig::defaults(3);
    Rng rng(97);
    for (int it = 0; it < 30; ++it) {
        const double max_speed = 0.6 + 0.2 * (it % 3);
        Trajectory traj = generate_functional_trajectory(rng, cfg, max_speed);
        traj.validate();
        REQUIRE(traj.length() >= 2);
        REQUIRE(traj.dt == Catch::Approx(0.05));
        for (int n = 0; n < 3; ++n) {
            const auto u = static_cast<std::size_t>(n);
            REQUIRE(traj.vel.front()[u] == 0.0);
            REQUIRE(traj.acc.front()[u] == 0.0);
            REQUIRE(traj.vel.back()[u] == 0.0);
            REQUIRE(traj.acc.back()[u] == 0.0);
        }
        double peak = 0.0;
        for (const auto& v : traj.vel)
            for (double x : v) peak = std::max(peak, std::abs(x));
        REQUIRE(peak <= max_speed * 1.02);
        for (const auto& p : traj.pos) {
            for (int n = 0; n < 3; ++n) {
                const auto u = static_cast<std::size_t>(n);
                REQUIRE(p[u] >= cfg.q_lower[u] - 1e-9);
                REQUIRE(p[u] <= cfg.q_upper[u] + 1e-9);
            }
        }
    }
}

TEST_CASE("holding the gravity-free equilibrium keeps the arm still") {
    ArmConfig cfg = ArmConfig::defaults(3);
    Vec hang = {-M_PI / 2.0, 0.0, 0.0};  // every link points straight down
    Trajectory traj = constant_trajectory(cfg, hang, 10);
    ExecutionRecord rec = execute_trajectory(cfg, traj);
    for (std::size_t t = 0; t < rec.meta.nominal_length; ++t) {
        for (int n = 0; n < 3; ++n) {
            REQUIRE(std::abs(rec.actual.pos[t][static_cast<std::size_t>(n)] - hang[static_cast<std::size_t>(n)]) < 1e-6);
        }
    }
    // converged at once: no hold samples were appended
    REQUIRE(rec.actual.length() == rec.meta.nominal_length);
}

TEST_CASE("execution rejects inconsistent commands") {
    ArmConfig cfg = ArmConfig::defaults(2);
    Trajectory traj = constant_trajectory(cfg, {-1.5, 0.0}, 5);
    traj.dt = 0.04;  // wrong rate
    REQUIRE_THROWS_AS(execute_trajectory(cfg, traj), std::invalid_argument);
    Trajectory wrong_joints = constant_trajectory(ArmConfig::defaults(3), {-1.5, 0.0, 0.0}, 5);
    REQUIRE_THROWS_AS(execute_trajectory(cfg, wrong_joints), std::invalid_argument);
}

TEST_CASE("config validation catches bad physical parameters") {
    ArmConfig cfg = ArmConfig::defaults(2);
    cfg.mass[0] = -1.0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ArmConfig::defaults(2);
    cfg.dt_sim = 0.01;  // too coarse
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ArmConfig::defaults(2);
    cfg.dt_sim = 3e-4;  // not an integer divisor of the command interval
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}
