#pragma once

// Planar N-link series-elastic arm: Lagrangian link dynamics coupled to motor
// inertias through joint stiffness (two-inertia flexible-joint model), an
// imperfect inverse-dynamics feed-forward inner-loop controller, a functional
// trajectory generator, payload injection and forward kinematics.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "common.hpp"
#include "signal.hpp"
#include "trajectory.hpp"

namespace flexarm {

struct ArmConfig {
    int N = 3;
    Vec mass;           // kg per link
    Vec length;         // m
    Vec com;            // m, center-of-mass offset along the link
    Vec inertia;        // kg m^2 about the COM
    Vec stiffness;      // Nm/rad joint spring
    Vec motor_inertia;  // kg m^2
    Vec damp_link;      // Nm s/rad, link side
    Vec damp_motor;     // Nm s/rad, motor side
    double gravity = 9.81;
    double dt_sim = 1e-3;       // integrator step, <= 2 ms
    double command_rate = 20.0; // Hz
    Vec kp, kd;                 // inner-loop feedback gains
    // Multiplier on link masses inside the controller. The controller slightly
    // underestimates the arm, so an unknown payload always widens the model
    // mismatch instead of cancelling it.
    double mass_error_factor = 0.90;
    double torque_limit = 200.0;      // Nm per joint
    Vec q_lower, q_upper;             // joint limits for trajectory generation
    double hold_time = 3.0;           // s past the final commanded point
    double conv_pos_tol = 0.01;       // rad, convergence criterion
    double conv_vel_tol = 0.05;       // rad/s

    static ArmConfig defaults(int N_ = 3) {
        ArmConfig c;
        c.N = N_;
        const auto n = static_cast<std::size_t>(N_);
        c.mass.assign(n, 2.0);
        c.length.assign(n, 0.35);
        c.com.assign(n, 0.175);
        c.inertia.assign(n, 2.0 * 0.35 * 0.35 / 12.0);
        c.stiffness.assign(n, 100.0);
        c.motor_inertia.assign(n, 0.05);
        c.damp_link.assign(n, 0.1);
        c.damp_motor.assign(n, 0.05);
        c.kp.assign(n, 80.0);
        c.kd.assign(n, 6.0);
        // centered on the hanging pose: first joint points down, rest aligned
        c.q_lower.assign(n, -1.0);
        c.q_upper.assign(n, 1.0);
        c.q_lower[0] = -M_PI / 2.0 - 1.0;
        c.q_upper[0] = -M_PI / 2.0 + 1.0;
        return c;
    }

    double command_dt() const { return 1.0 / command_rate; }

    int steps_per_command() const {
        const double ratio = 1.0 / (command_rate * dt_sim);
        const int k = static_cast<int>(std::lround(ratio));
        if (k < 1 || std::abs(ratio - k) > 1e-9) {
            throw std::invalid_argument("ArmConfig: controller rate must be an integer multiple of the command rate");
        }
        return k;
    }

    void validate() const {
        if (N < 1) throw std::invalid_argument("ArmConfig: N must be >= 1");
        auto check_pos = [&](const Vec& v, const char* name) {
            if (static_cast<int>(v.size()) != N) throw std::invalid_argument(std::string("ArmConfig: bad size for ") + name);
            for (double x : v) {
                if (!(x > 0.0)) throw std::invalid_argument(std::string("ArmConfig: ") + name + " must be positive");
            }
        };
        check_pos(mass, "mass");
        check_pos(length, "length");
        check_pos(com, "com");
        check_pos(inertia, "inertia");
        check_pos(stiffness, "stiffness");
        check_pos(motor_inertia, "motor_inertia");
        if (!(dt_sim > 0.0 && dt_sim <= 2e-3 + 1e-12)) {
            throw std::invalid_argument("ArmConfig: integrator step must be in (0, 2 ms]");
        }
        steps_per_command();
    }
};

struct SimState {
    Vec q;      // link positions, rad
    Vec qd;     // link velocities, rad/s
    Vec th_m;   // motor positions, rad
    Vec thd_m;  // motor velocities, rad/s
    double payload = 0.0;  // kg at the end-effector

    static SimState zero(int N) {
        SimState s;
        const auto n = static_cast<std::size_t>(N);
        s.q.assign(n, 0.0);
        s.qd.assign(n, 0.0);
        s.th_m.assign(n, 0.0);
        s.thd_m.assign(n, 0.0);
        return s;
    }

    bool finite() const {
        auto ok = [](const Vec& v) {
            for (double x : v) if (!std::isfinite(x)) return false;
            return true;
        };
        return ok(q) && ok(qd) && ok(th_m) && ok(thd_m);
    }
};

// --- rigid-body terms ------------------------------------------------------

// Link-side mass matrix of the planar chain, optionally with a point-mass
// payload at the tip and a uniform scale on link masses (controller model error).
inline Eigen::MatrixXd mass_matrix(const ArmConfig& cfg, const Vec& q, double mass_scale = 1.0,
                                   double payload = 0.0) {
    const int N = cfg.N;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
    Vec phi(q.size());
    double s = 0.0;
    for (int i = 0; i < N; ++i) {
        s += q[static_cast<std::size_t>(i)];
        phi[static_cast<std::size_t>(i)] = s;
    }
    // translational jacobian of a point at offset r_last along link last_link
    auto point_jacobian = [&](int last_link, double r_last) {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2, N);
        for (int k = 0; k <= last_link; ++k) {
            double jx = 0.0, jy = 0.0;
            for (int j = k; j <= last_link; ++j) {
                const double lever = (j == last_link) ? r_last : cfg.length[static_cast<std::size_t>(j)];
                jx += -lever * std::sin(phi[static_cast<std::size_t>(j)]);
                jy += lever * std::cos(phi[static_cast<std::size_t>(j)]);
            }
            J(0, k) = jx;
            J(1, k) = jy;
        }
        return J;
    };
    for (int i = 0; i < N; ++i) {
        const double m = mass_scale * cfg.mass[static_cast<std::size_t>(i)];
        const double I = mass_scale * cfg.inertia[static_cast<std::size_t>(i)];
        Eigen::MatrixXd J = point_jacobian(i, cfg.com[static_cast<std::size_t>(i)]);
        M.noalias() += m * J.transpose() * J;
        // angular jacobian is 1 for k <= i
        for (int k = 0; k <= i; ++k)
            for (int l = 0; l <= i; ++l) M(k, l) += I;
    }
    if (payload > 0.0) {
        Eigen::MatrixXd J = point_jacobian(N - 1, cfg.length[static_cast<std::size_t>(N - 1)]);
        M.noalias() += payload * J.transpose() * J;
    }
    return M;
}

inline Eigen::VectorXd gravity_torque(const ArmConfig& cfg, const Vec& q, double mass_scale = 1.0,
                                      double payload = 0.0) {
    const int N = cfg.N;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(N);
    Vec phi(q.size());
    double s = 0.0;
    for (int i = 0; i < N; ++i) {
        s += q[static_cast<std::size_t>(i)];
        phi[static_cast<std::size_t>(i)] = s;
    }
    // dU/dq_k with U = sum m_i g0 * y_i
    auto add_point = [&](int last_link, double r_last, double m) {
        for (int k = 0; k <= last_link; ++k) {
            double dy = 0.0;
            for (int j = k; j <= last_link; ++j) {
                const double lever = (j == last_link) ? r_last : cfg.length[static_cast<std::size_t>(j)];
                dy += lever * std::cos(phi[static_cast<std::size_t>(j)]);
            }
            g[k] += m * cfg.gravity * dy;
        }
    };
    for (int i = 0; i < N; ++i) add_point(i, cfg.com[static_cast<std::size_t>(i)], mass_scale * cfg.mass[static_cast<std::size_t>(i)]);
    if (payload > 0.0) add_point(N - 1, cfg.length[static_cast<std::size_t>(N - 1)], payload);
    return g;
}

struct DynamicsTerms {
    Eigen::MatrixXd M;
    Eigen::VectorXd c;  // Coriolis/centrifugal torques
    Eigen::VectorXd g;
};

// Coriolis torques via Christoffel symbols; dM/dq by central differences of
// the analytic mass matrix.
inline Eigen::VectorXd coriolis_torque(const ArmConfig& cfg, const Vec& q, const Vec& qd,
                                       double mass_scale = 1.0, double payload = 0.0) {
    const int N = cfg.N;
    const double h = 1e-6;
    std::vector<Eigen::MatrixXd> dM(static_cast<std::size_t>(N));
    Vec qp = q;
    for (int i = 0; i < N; ++i) {
        qp[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)] + h;
        Eigen::MatrixXd Mp = mass_matrix(cfg, qp, mass_scale, payload);
        qp[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)] - h;
        Eigen::MatrixXd Mm = mass_matrix(cfg, qp, mass_scale, payload);
        qp[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(i)];
        dM[static_cast<std::size_t>(i)] = (Mp - Mm) / (2.0 * h);
    }
    Eigen::VectorXd c = Eigen::VectorXd::Zero(N);
    for (int k = 0; k < N; ++k) {
        double acc = 0.0;
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < N; ++j) {
                const double gamma = dM[static_cast<std::size_t>(i)](k, j) -
                                     0.5 * dM[static_cast<std::size_t>(k)](i, j);
                acc += gamma * qd[static_cast<std::size_t>(i)] * qd[static_cast<std::size_t>(j)];
            }
        }
        c[k] = acc;
    }
    return c;
}

inline DynamicsTerms dynamics_terms(const ArmConfig& cfg, const Vec& q, const Vec& qd,
                                    double mass_scale = 1.0, double payload = 0.0) {
    ensure_finite(q, "dynamics_terms.q");
    ensure_finite(qd, "dynamics_terms.qd");
    DynamicsTerms t;
    t.M = mass_matrix(cfg, q, mass_scale, payload);
    t.c = coriolis_torque(cfg, q, qd, mass_scale, payload);
    t.g = gravity_torque(cfg, q, mass_scale, payload);
    return t;
}

inline std::array<double, 2> forward_kinematics(const ArmConfig& cfg, const Vec& q) {
    double phi = 0.0, x = 0.0, y = 0.0;
    for (int i = 0; i < cfg.N; ++i) {
        phi += q[static_cast<std::size_t>(i)];
        x += cfg.length[static_cast<std::size_t>(i)] * std::cos(phi);
        y += cfg.length[static_cast<std::size_t>(i)] * std::sin(phi);
    }
    return {x, y};
}

// Total mechanical energy (kinetic + gravitational + spring), used for the
// conservation/passivity oracles.
inline double total_energy(const ArmConfig& cfg, const SimState& s) {
    const int N = cfg.N;
    Eigen::MatrixXd M = mass_matrix(cfg, s.q, 1.0, s.payload);
    Eigen::Map<const Eigen::VectorXd> qd(s.qd.data(), N);
    double e = 0.5 * qd.dot(M * qd);
    for (int i = 0; i < N; ++i) {
        e += 0.5 * cfg.motor_inertia[static_cast<std::size_t>(i)] * s.thd_m[static_cast<std::size_t>(i)] * s.thd_m[static_cast<std::size_t>(i)];
        const double defl = s.th_m[static_cast<std::size_t>(i)] - s.q[static_cast<std::size_t>(i)];
        e += 0.5 * cfg.stiffness[static_cast<std::size_t>(i)] * defl * defl;
    }
    // gravitational potential of link COMs and payload
    double phi = 0.0, yb = 0.0;
    for (int i = 0; i < N; ++i) {
        phi += s.q[static_cast<std::size_t>(i)];
        const double yc = yb + cfg.com[static_cast<std::size_t>(i)] * std::sin(phi);
        e += cfg.mass[static_cast<std::size_t>(i)] * cfg.gravity * yc;
        yb += cfg.length[static_cast<std::size_t>(i)] * std::sin(phi);
    }
    e += s.payload * cfg.gravity * yb;
    return e;
}

// --- integration -----------------------------------------------------------

namespace detail {

// Flexible-joint accelerations for a fixed motor torque.
inline void flex_accel(const ArmConfig& cfg, const Vec& q, const Vec& qd, const Vec& th_m,
                       const Vec& thd_m, const Eigen::VectorXd& tau, double payload,
                       Eigen::VectorXd& qdd, Eigen::VectorXd& thdd_m) {
    const int N = cfg.N;
    DynamicsTerms t = dynamics_terms(cfg, q, qd, 1.0, payload);
    Eigen::VectorXd rhs(N);
    for (int i = 0; i < N; ++i) {
        const double defl = th_m[static_cast<std::size_t>(i)] - q[static_cast<std::size_t>(i)];
        rhs[i] = cfg.stiffness[static_cast<std::size_t>(i)] * defl - t.c[i] - t.g[i] -
                 cfg.damp_link[static_cast<std::size_t>(i)] * qd[static_cast<std::size_t>(i)];
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(t.M);
    if (ldlt.info() != Eigen::Success) {
        throw std::runtime_error("step_dynamics: mass matrix factorization failed");
    }
    qdd = ldlt.solve(rhs);
    thdd_m.resize(N);
    for (int i = 0; i < N; ++i) {
        const double defl = th_m[static_cast<std::size_t>(i)] - q[static_cast<std::size_t>(i)];
        thdd_m[i] = (tau[i] - cfg.damp_motor[static_cast<std::size_t>(i)] * thd_m[static_cast<std::size_t>(i)] -
                     cfg.stiffness[static_cast<std::size_t>(i)] * defl) /
                    cfg.motor_inertia[static_cast<std::size_t>(i)];
    }
}

}  // namespace detail

// One classical RK4 step at cfg.dt_sim under constant motor torque (clamped
// to the configured limit).
inline SimState step_dynamics(const ArmConfig& cfg, const SimState& state, const Vec& motor_torque,
                              int* clamp_count = nullptr) {
    const int N = cfg.N;
    Eigen::VectorXd tau(N);
    for (int i = 0; i < N; ++i) {
        double t = motor_torque[static_cast<std::size_t>(i)];
        if (std::abs(t) > cfg.torque_limit) {
            t = t > 0.0 ? cfg.torque_limit : -cfg.torque_limit;
            if (clamp_count) ++(*clamp_count);
        }
        tau[i] = t;
    }
    const double h = cfg.dt_sim;
    struct Deriv {
        Eigen::VectorXd qd, qdd, thd, thdd;
    };
    auto eval = [&](const SimState& s) {
        Deriv d;
        d.qd = Eigen::Map<const Eigen::VectorXd>(s.qd.data(), N);
        d.thd = Eigen::Map<const Eigen::VectorXd>(s.thd_m.data(), N);
        detail::flex_accel(cfg, s.q, s.qd, s.th_m, s.thd_m, tau, state.payload, d.qdd, d.thdd);
        return d;
    };
    auto advance = [&](const SimState& s, const Deriv& d, double dt) {
        SimState n = s;
        for (int i = 0; i < N; ++i) {
            n.q[static_cast<std::size_t>(i)] = s.q[static_cast<std::size_t>(i)] + dt * d.qd[i];
            n.qd[static_cast<std::size_t>(i)] = s.qd[static_cast<std::size_t>(i)] + dt * d.qdd[i];
            n.th_m[static_cast<std::size_t>(i)] = s.th_m[static_cast<std::size_t>(i)] + dt * d.thd[i];
            n.thd_m[static_cast<std::size_t>(i)] = s.thd_m[static_cast<std::size_t>(i)] + dt * d.thdd[i];
        }
        return n;
    };
    Deriv k1 = eval(state);
    Deriv k2 = eval(advance(state, k1, h / 2.0));
    Deriv k3 = eval(advance(state, k2, h / 2.0));
    Deriv k4 = eval(advance(state, k3, h));
    SimState out = state;
    for (int i = 0; i < N; ++i) {
        out.q[static_cast<std::size_t>(i)] += h / 6.0 * (k1.qd[i] + 2 * k2.qd[i] + 2 * k3.qd[i] + k4.qd[i]);
        out.qd[static_cast<std::size_t>(i)] += h / 6.0 * (k1.qdd[i] + 2 * k2.qdd[i] + 2 * k3.qdd[i] + k4.qdd[i]);
        out.th_m[static_cast<std::size_t>(i)] += h / 6.0 * (k1.thd[i] + 2 * k2.thd[i] + 2 * k3.thd[i] + k4.thd[i]);
        out.thd_m[static_cast<std::size_t>(i)] += h / 6.0 * (k1.thdd[i] + 2 * k2.thdd[i] + 2 * k3.thdd[i] + k4.thdd[i]);
    }
    if (!out.finite()) {
        std::ostringstream os;
        os << "step_dynamics: NaN state; last valid q =";
        for (double v : state.q) os << " " << v;
        throw std::runtime_error(os.str());
    }
    return out;
}

// Inverse-dynamics feed-forward + PD on the motor side. The internal rigid
// model uses perturbed link masses and ignores the joint dynamics; its one
// concession to the elastic drivetrain is the standard static sag
// compensation (the motor target leads the link command by g/K, computed
// with the same perturbed gravity model). The residual errors -- model
// mismatch and the unmodeled flexible transients, which grow with commanded
// speed -- are what the learned outer loop compensates.
inline Vec inner_loop_control(const ArmConfig& cfg, const SimState& state, const Vec& th_cmd,
                              const Vec& thd_cmd, const Vec& thdd_cmd) {
    const int N = cfg.N;
    DynamicsTerms t = dynamics_terms(cfg, th_cmd, thd_cmd, cfg.mass_error_factor, 0.0);
    Eigen::Map<const Eigen::VectorXd> thdd(thdd_cmd.data(), N);
    Eigen::VectorXd ff = t.M * thdd + t.c + t.g;
    Vec tau(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) {
        ff[i] += cfg.motor_inertia[static_cast<std::size_t>(i)] * thdd_cmd[static_cast<std::size_t>(i)];
        const double lead = t.g[i] / cfg.stiffness[static_cast<std::size_t>(i)];
        tau[static_cast<std::size_t>(i)] =
            ff[i] +
            cfg.kp[static_cast<std::size_t>(i)] *
                (th_cmd[static_cast<std::size_t>(i)] + lead - state.th_m[static_cast<std::size_t>(i)]) +
            cfg.kd[static_cast<std::size_t>(i)] * (thd_cmd[static_cast<std::size_t>(i)] - state.thd_m[static_cast<std::size_t>(i)]);
    }
    return tau;
}

// --- trajectory generation ---------------------------------------------------

namespace detail {

inline void quintic_sample(double tau, double& s, double& sd, double& sdd) {
    const double t2 = tau * tau, t3 = t2 * tau, t4 = t3 * tau, t5 = t4 * tau;
    s = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    sd = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
    sdd = 60.0 * tau - 180.0 * t2 + 120.0 * t3;
}

}  // namespace detail

// Random start/goal (optionally 1-2 waypoints) connected by rest-to-rest
// quintic segments, time-scaled so the peak joint speed matches max_speed,
// sampled at the command rate.
inline Trajectory generate_functional_trajectory(Rng& rng, const ArmConfig& cfg, double max_speed,
                                                 double waypoint_prob = 0.6) {
    if (!(max_speed > 0.0)) throw std::invalid_argument("generate_functional_trajectory: max_speed must be positive");
    for (int i = 0; i < cfg.N; ++i) {
        if (!(cfg.q_lower[static_cast<std::size_t>(i)] < cfg.q_upper[static_cast<std::size_t>(i)])) {
            throw std::invalid_argument("generate_functional_trajectory: empty joint limit range");
        }
    }
    const double dt = cfg.command_dt();
    auto draw_config = [&]() {
        Vec q(static_cast<std::size_t>(cfg.N));
        for (int i = 0; i < cfg.N; ++i) {
            std::uniform_real_distribution<double> d(cfg.q_lower[static_cast<std::size_t>(i)],
                                                     cfg.q_upper[static_cast<std::size_t>(i)]);
            q[static_cast<std::size_t>(i)] = d(rng);
        }
        return q;
    };
    std::vector<Vec> via;
    via.push_back(draw_config());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int n_way = 0;
    if (unit(rng) < waypoint_prob) n_way = unit(rng) < 0.5 ? 1 : 2;
    for (int w = 0; w < n_way; ++w) via.push_back(draw_config());
    via.push_back(draw_config());

    Trajectory traj;
    traj.joints = cfg.N;
    traj.dt = dt;
    const double min_duration = 1.5;  // keeps sampled peak speed within 2% after grid rounding
    for (std::size_t s = 0; s + 1 < via.size(); ++s) {
        Vec dq(static_cast<std::size_t>(cfg.N));
        double max_dq = 0.0;
        for (int i = 0; i < cfg.N; ++i) {
            dq[static_cast<std::size_t>(i)] = via[s + 1][static_cast<std::size_t>(i)] - via[s][static_cast<std::size_t>(i)];
            max_dq = std::max(max_dq, std::abs(dq[static_cast<std::size_t>(i)]));
        }
        double T = std::max(min_duration, 15.0 / 8.0 * max_dq / max_speed);
        const long steps = std::max<long>(1, std::lround(T / dt));
        T = static_cast<double>(steps) * dt;
        const long t0 = (s == 0) ? 0 : 1;  // segment boundaries shared
        for (long k = t0; k <= steps; ++k) {
            const double tau = static_cast<double>(k) / static_cast<double>(steps);
            double sv, sdv, sddv;
            detail::quintic_sample(tau, sv, sdv, sddv);
            Vec p(static_cast<std::size_t>(cfg.N)), v(static_cast<std::size_t>(cfg.N)), a(static_cast<std::size_t>(cfg.N));
            for (int i = 0; i < cfg.N; ++i) {
                p[static_cast<std::size_t>(i)] = via[s][static_cast<std::size_t>(i)] + dq[static_cast<std::size_t>(i)] * sv;
                v[static_cast<std::size_t>(i)] = dq[static_cast<std::size_t>(i)] * sdv / T;
                a[static_cast<std::size_t>(i)] = dq[static_cast<std::size_t>(i)] * sddv / (T * T);
            }
            traj.pos.push_back(std::move(p));
            traj.vel.push_back(std::move(v));
            traj.acc.push_back(std::move(a));
        }
    }
    return traj;
}

// --- execution ---------------------------------------------------------------

// Run the inner loop on the simulated arm tracking a 20 Hz command trajectory
// (zero-order hold between samples), then hold the last command until
// convergence or the hold cap so extra time is measurable.
inline ExecutionRecord execute_trajectory(const ArmConfig& cfg, const Trajectory& commands,
                                          double payload = 0.0,
                                          const Trajectory* desired_for_record = nullptr) {
    cfg.validate();
    commands.validate();
    if (commands.length() == 0) throw std::invalid_argument("execute_trajectory: empty command trajectory");
    if (commands.joints != cfg.N) throw std::invalid_argument("execute_trajectory: joint-count mismatch");
    if (std::abs(commands.dt - cfg.command_dt()) > 1e-9) {
        throw std::invalid_argument("execute_trajectory: commands must be sampled at the command rate");
    }
    const Trajectory& desired = desired_for_record ? *desired_for_record : commands;
    if (desired_for_record && desired.length() != commands.length()) {
        throw std::invalid_argument("execute_trajectory: desired/commands length mismatch");
    }
    const int spc = cfg.steps_per_command();
    const std::size_t T = commands.length();

    SimState state = SimState::zero(cfg.N);
    state.payload = payload;
    state.q = commands.pos[0];
    // motor position at static equilibrium for the initial pose
    Eigen::VectorXd g0 = gravity_torque(cfg, state.q, 1.0, payload);
    for (int i = 0; i < cfg.N; ++i) {
        state.th_m[static_cast<std::size_t>(i)] = state.q[static_cast<std::size_t>(i)] + g0[i] / cfg.stiffness[static_cast<std::size_t>(i)];
    }

    ExecutionRecord rec;
    rec.desired.joints = cfg.N;
    rec.desired.dt = commands.dt;
    rec.actual.joints = cfg.N;
    rec.actual.dt = commands.dt;
    rec.meta.payload = payload;
    rec.meta.nominal_length = T;

    auto record_sample = [&](const Vec& dp, const Vec& dv, const Vec& da) {
        rec.desired.pos.push_back(dp);
        rec.desired.vel.push_back(dv);
        rec.desired.acc.push_back(da);
        rec.actual.pos.push_back(state.q);
        rec.actual.vel.push_back(state.qd);
        rec.actual.acc.emplace_back(static_cast<std::size_t>(cfg.N), 0.0);  // spline-filled below
    };

    int clamps = 0;
    for (std::size_t t = 0; t < T; ++t) {
        record_sample(desired.pos[t], desired.vel[t], desired.acc[t]);
        if (t + 1 == T) break;  // last sample recorded; hold phase follows
        for (int k = 0; k < spc; ++k) {
            Vec tau = inner_loop_control(cfg, state, commands.pos[t], commands.vel[t], commands.acc[t]);
            state = step_dynamics(cfg, state, tau, &clamps);
        }
    }

    // hold the final command
    const Vec& hp = commands.pos[T - 1];
    Vec hv(static_cast<std::size_t>(cfg.N), 0.0), ha(static_cast<std::size_t>(cfg.N), 0.0);
    const long hold_samples = std::lround(cfg.hold_time * cfg.command_rate);
    auto converged = [&]() {
        for (int i = 0; i < cfg.N; ++i) {
            if (std::abs(state.q[static_cast<std::size_t>(i)] - hp[static_cast<std::size_t>(i)]) > cfg.conv_pos_tol) return false;
            if (std::abs(state.qd[static_cast<std::size_t>(i)]) > cfg.conv_vel_tol) return false;
        }
        return true;
    };
    for (long hsample = 0; hsample < hold_samples; ++hsample) {
        if (converged()) break;
        for (int k = 0; k < spc; ++k) {
            Vec tau = inner_loop_control(cfg, state, hp, hv, ha);
            state = step_dynamics(cfg, state, tau, &clamps);
        }
        record_sample(hp, hv, ha);
    }
    if (clamps > 0) {
        std::fprintf(stderr, "W-SIM: torque limit clamped %d times during execution\n", clamps);
    }

    // actual accelerations from a cubic spline of recorded velocities
    const std::size_t L = rec.actual.length();
    if (L >= 4) {
        for (int i = 0; i < cfg.N; ++i) {
            Vec v(L);
            for (std::size_t t = 0; t < L; ++t) v[t] = rec.actual.vel[t][static_cast<std::size_t>(i)];
            Vec a = spline_acceleration(v, rec.actual.dt);
            for (std::size_t t = 0; t < L; ++t) rec.actual.acc[t][static_cast<std::size_t>(i)] = a[t];
        }
    }
    return rec;
}

}  // namespace flexarm
