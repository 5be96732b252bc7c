#pragma once

// Benchmark dataset generation, command deployment (model -> executable
// trajectory), and the experiment suite: ablation table, speed sweep and
// payload study, with delimited-text and structured-summary outputs.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <mutex>
#include <optional>
#include <thread>

#include "pipeline.hpp"
#include "weights_io.hpp"

namespace flexarm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Dataset generation

struct DatasetSpec {
    double minutes = 45.0;
    Vec tiers = {0.6, 0.8, 1.0};  // rad/s maximum velocities, equal portions
    double waypoint_prob = 0.6;
    std::uint64_t seed = 1;
};

inline double nominal_duration(const ExecutionRecord& rec) {
    return static_cast<double>(rec.meta.nominal_length - 1) * rec.desired.dt;
}

// Functional trajectories per velocity tier, executed on the simulator, until
// each tier holds its share of the requested minutes.
inline std::vector<ExecutionRecord> generate_dataset(const ArmConfig& cfg, const DatasetSpec& spec,
                                                     std::function<void(std::size_t)> progress = {}) {
    if (!(spec.minutes > 0.0)) throw std::invalid_argument("generate_dataset: minutes must be positive");
    if (spec.tiers.empty()) throw std::invalid_argument("generate_dataset: need at least one velocity tier");
    const double per_tier = spec.minutes * 60.0 / static_cast<double>(spec.tiers.size());
    std::vector<ExecutionRecord> records;
    for (std::size_t tier = 0; tier < spec.tiers.size(); ++tier) {
        double accumulated = 0.0;
        for (std::size_t idx = 0; accumulated < per_tier; ++idx) {
            const std::uint64_t traj_seed = spec.seed ^ fnv1a64("tier" + std::to_string(tier) + ":" + std::to_string(idx));
            Rng rng(traj_seed);
            Trajectory desired = generate_functional_trajectory(rng, cfg, spec.tiers[tier], spec.waypoint_prob);
            ExecutionRecord rec = execute_trajectory(cfg, desired);
            rec.meta.max_speed = spec.tiers[tier];
            rec.meta.seed = traj_seed;
            accumulated += nominal_duration(rec);
            records.push_back(std::move(rec));
            if (progress) progress(records.size());
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// Deployment: model outputs -> executable command trajectory

// outputs[t] = [theta_f(t+1), thd_f(t+1)] for t = 0..T-2. The command
// sequence starts from the desired start point; position and velocity
// commands are Savitzky-Golay smoothed per joint before execution, and
// command accelerations come from a spline of the command velocities.
inline Trajectory assemble_command_trajectory(const Trajectory& desired, const std::vector<Vec>& outputs,
                                              bool smooth = true, const SavGolSpec& sg = {}) {
    if (outputs.size() + 1 != desired.length()) {
        throw std::invalid_argument("assemble_command_trajectory: need T-1 model outputs");
    }
    const int N = desired.joints;
    Trajectory cmd;
    cmd.joints = N;
    cmd.dt = desired.dt;
    cmd.resize(desired.length());
    cmd.pos[0] = desired.pos[0];
    cmd.vel[0] = desired.vel[0];
    for (std::size_t t = 1; t < desired.length(); ++t) {
        const Vec& y = outputs[t - 1];
        if (static_cast<int>(y.size()) != 2 * N) {
            throw std::invalid_argument("assemble_command_trajectory: output width mismatch");
        }
        cmd.pos[t].assign(y.begin(), y.begin() + N);
        cmd.vel[t].assign(y.begin() + N, y.end());
    }
    if (smooth && cmd.length() >= static_cast<std::size_t>(sg.window)) {
        for (int n = 0; n < N; ++n) {
            Vec p(cmd.length()), v(cmd.length());
            for (std::size_t t = 0; t < cmd.length(); ++t) {
                p[t] = cmd.pos[t][static_cast<std::size_t>(n)];
                v[t] = cmd.vel[t][static_cast<std::size_t>(n)];
            }
            p = savgol_smooth(p, sg);
            v = savgol_smooth(v, sg);
            for (std::size_t t = 0; t < cmd.length(); ++t) {
                cmd.pos[t][static_cast<std::size_t>(n)] = p[t];
                cmd.vel[t][static_cast<std::size_t>(n)] = v[t];
            }
        }
        // execution starts at the desired start point; keep it exact
        cmd.pos[0] = desired.pos[0];
        cmd.vel[0] = desired.vel[0];
    }
    if (cmd.length() >= 4) {
        for (int n = 0; n < N; ++n) {
            Vec v(cmd.length());
            for (std::size_t t = 0; t < cmd.length(); ++t) v[t] = cmd.vel[t][static_cast<std::size_t>(n)];
            Vec a = spline_acceleration(v, cmd.dt);
            for (std::size_t t = 0; t < cmd.length(); ++t) cmd.acc[t][static_cast<std::size_t>(n)] = a[t];
        }
    }
    return cmd;
}

// ---------------------------------------------------------------------------
// Evaluation

enum class ModelKind { Baseline, Fc, Rnn, Dwh, FinDwh };

inline const char* model_name(ModelKind k) {
    switch (k) {
        case ModelKind::Baseline: return "baseline";
        case ModelKind::Fc: return "fc";
        case ModelKind::Rnn: return "rnn";
        case ModelKind::Dwh: return "dwh";
        case ModelKind::FinDwh: return "fin-dwh";
    }
    return "?";
}

struct TrainedModels {
    std::optional<Mlp> fc;
    std::optional<RnnModel> rnn;
    std::optional<DwhModel> dwh;
    std::optional<FinDwhModel> fin_dwh;
};

struct EvalConfig {
    int n_trajectories = 100;
    double max_speed = 1.0;
    Vec payloads = {0.25, 0.5, 1.1};
    Vec sweep_speeds = {0.2, 0.4, 0.6, 0.8, 1.0};
    int sweep_trajectories = 20;
    int payload_trajectories = 20;
    std::uint64_t seed = 424242;  // distinct from training seeds: trajectories stay unseen
    int jobs = 1;
    double waypoint_prob = 0.6;
};

// Fixed geometry per index: the same seed yields the same start/goal/waypoints
// at any speed, so speed sweeps re-time the identical trajectory set.
inline Trajectory eval_trajectory(const ArmConfig& cfg, const EvalConfig& ec, int index, double max_speed) {
    Rng rng(ec.seed ^ fnv1a64("eval:" + std::to_string(index)));
    return generate_functional_trajectory(rng, cfg, max_speed, ec.waypoint_prob);
}

struct TrajectoryResult {
    double e_pos = 0.0, e_vel = 0.0, e_eef = 0.0, extra = 0.0;
    bool extra_capped = false;
    double infer_seconds = 0.0;
};

inline TrajectoryResult evaluate_one(const ArmConfig& cfg, TrainedModels& models, ModelKind kind,
                                     const Trajectory& desired, double payload) {
    std::vector<Vec> outputs;
    const auto t0 = std::chrono::steady_clock::now();
    switch (kind) {
        case ModelKind::Baseline: break;
        case ModelKind::Fc: outputs = models.fc.value().predict_sequence(desired); break;
        case ModelKind::Rnn: outputs = models.rnn.value().predict_sequence(desired); break;
        case ModelKind::Dwh: outputs = models.dwh.value().predict_sequence(desired); break;
        case ModelKind::FinDwh: outputs = models.fin_dwh.value().predict_sequence(desired); break;
    }
    const auto t1 = std::chrono::steady_clock::now();
    ExecutionRecord rec;
    if (kind == ModelKind::Baseline) {
        rec = execute_trajectory(cfg, desired, payload);
    } else {
        Trajectory cmd = assemble_command_trajectory(desired, outputs);
        rec = execute_trajectory(cfg, cmd, payload, &desired);
    }
    TrajectoryResult r;
    r.e_pos = position_error(rec);
    r.e_vel = velocity_error(rec);
    r.e_eef = eef_error(cfg, rec);
    ExtraTime et = extra_time(rec, cfg.conv_pos_tol, cfg.conv_vel_tol, cfg.hold_time);
    r.extra = et.seconds;
    r.extra_capped = et.capped;
    r.infer_seconds = std::chrono::duration<double>(t1 - t0).count();
    return r;
}

struct ModelMetrics {
    std::string name;
    Vec e_pos, e_vel, e_eef, extra, infer;

    ConfidenceInterval pos_ci() const { return confidence_interval_95(e_pos); }
    ConfidenceInterval vel_ci() const { return confidence_interval_95(e_vel); }
    ConfidenceInterval eef_ci() const { return confidence_interval_95(e_eef); }
    ConfidenceInterval extra_ci() const { return confidence_interval_95(extra); }
};

namespace detail {

inline void parallel_for(int n, int jobs, const std::function<void(int)>& body) {
    jobs = std::max(1, jobs);
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < jobs; ++w) {
        threads.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

// Evaluate a model set on a fixed trajectory collection. Independent simulator
// instances and per-thread model copies run in parallel.
inline ModelMetrics evaluate_model(const ArmConfig& cfg, const TrainedModels& models, ModelKind kind,
                                   const std::vector<Trajectory>& trajectories, double payload,
                                   int jobs) {
    ModelMetrics m;
    m.name = model_name(kind);
    const int n = static_cast<int>(trajectories.size());
    m.e_pos.resize(static_cast<std::size_t>(n));
    m.e_vel.resize(static_cast<std::size_t>(n));
    m.e_eef.resize(static_cast<std::size_t>(n));
    m.extra.resize(static_cast<std::size_t>(n));
    m.infer.resize(static_cast<std::size_t>(n));
    detail::parallel_for(n, jobs, [&](int i) {
        TrainedModels local = models;  // models are small; copies keep threads independent
        TrajectoryResult r = evaluate_one(cfg, local, kind, trajectories[static_cast<std::size_t>(i)], payload);
        m.e_pos[static_cast<std::size_t>(i)] = r.e_pos;
        m.e_vel[static_cast<std::size_t>(i)] = r.e_vel;
        m.e_eef[static_cast<std::size_t>(i)] = r.e_eef;
        m.extra[static_cast<std::size_t>(i)] = r.extra;
        m.infer[static_cast<std::size_t>(i)] = r.infer_seconds;
    });
    return m;
}

// ---------------------------------------------------------------------------
// Reports

using json = nlohmann::json;

inline json metrics_to_json(const ModelMetrics& m) {
    auto ci = [](const ConfidenceInterval& c) { return json{{"mean", c.mean}, {"ci95", c.half_width}}; };
    double infer_mean = 0.0;
    for (double v : m.infer) infer_mean += v;
    if (!m.infer.empty()) infer_mean /= static_cast<double>(m.infer.size());
    return json{{"model", m.name},
                {"e_pos_rad", ci(m.pos_ci())},
                {"e_vel_rad_s", ci(m.vel_ci())},
                {"e_eef_m", ci(m.eef_ci())},
                {"extra_time_s", ci(m.extra_ci())},
                {"inference_s_per_trajectory", infer_mean}};
}

inline double improvement_pct(double baseline, double value) {
    return baseline != 0.0 ? 100.0 * (baseline - value) / baseline : 0.0;
}

// Published real-robot reference results attached for side-by-side display
// only; the simulation is never asserted against them.
inline json hardware_reference_values() {
    return json{
        {"note", "real-robot reference values, display only"},
        {"ablation", {{"baseline", {{"e_pos_rad", 0.069}, {"e_pos_ci95", 0.0062}, {"e_eef_cm", 2.981}, {"extra_time_s", 0.75}}},
                      {"fin-dwh", {{"e_pos_rad", 0.036}, {"e_pos_ci95", 0.0033}, {"e_eef_cm", 1.015}, {"extra_time_s", 0.06}}}}}};
}

struct MetricsReport {
    std::string kind;
    std::vector<ModelMetrics> rows;
    json extra_info = json::object();

    json to_json() const {
        json rows_json = json::array();
        double base_pos = 0.0, base_vel = 0.0, base_eef = 0.0, base_extra = 0.0;
        for (const auto& r : rows) {
            if (r.name == "baseline") {
                base_pos = r.pos_ci().mean;
                base_vel = r.vel_ci().mean;
                base_eef = r.eef_ci().mean;
                base_extra = r.extra_ci().mean;
            }
        }
        for (const auto& r : rows) {
            json j = metrics_to_json(r);
            if (r.name != "baseline" && base_pos != 0.0) {
                j["improvement_vs_baseline_pct"] = {{"e_pos", improvement_pct(base_pos, r.pos_ci().mean)},
                                                    {"e_vel", improvement_pct(base_vel, r.vel_ci().mean)},
                                                    {"e_eef", improvement_pct(base_eef, r.eef_ci().mean)},
                                                    {"extra_time", improvement_pct(base_extra, r.extra_ci().mean)}};
            }
            rows_json.push_back(std::move(j));
        }
        json out = {{"experiment", kind}, {"tool_version", kVersion}, {"rows", rows_json},
                    {"hardware_reference", hardware_reference_values()}};
        for (auto& [k, v] : extra_info.items()) out[k] = v;
        return out;
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("MetricsReport: cannot open " + path);
        out << "# flexarm-report " << kind << " v" << kVersion << "\n";
        out << "model,e_pos_mean,e_pos_ci95,e_vel_mean,e_vel_ci95,e_eef_mean,e_eef_ci95,extra_mean,extra_ci95,infer_s\n";
        for (const auto& r : rows) {
            auto p = r.pos_ci();
            auto v = r.vel_ci();
            auto e = r.eef_ci();
            auto x = r.extra_ci();
            double infer_mean = 0.0;
            for (double t : r.infer) infer_mean += t;
            if (!r.infer.empty()) infer_mean /= static_cast<double>(r.infer.size());
            out << r.name << "," << fmt_double(p.mean) << "," << fmt_double(p.half_width) << ","
                << fmt_double(v.mean) << "," << fmt_double(v.half_width) << "," << fmt_double(e.mean)
                << "," << fmt_double(e.half_width) << "," << fmt_double(x.mean) << ","
                << fmt_double(x.half_width) << "," << fmt_double(infer_mean) << "\n";
        }
    }
};

// ---------------------------------------------------------------------------
// Experiments

// Table I/II analog: all requested models on the held-out set at max_speed.
inline MetricsReport run_ablation(const ArmConfig& cfg, const TrainedModels& models,
                                  const EvalConfig& ec, const std::vector<ModelKind>& kinds) {
    std::vector<Trajectory> trajectories;
    trajectories.reserve(static_cast<std::size_t>(ec.n_trajectories));
    for (int i = 0; i < ec.n_trajectories; ++i) trajectories.push_back(eval_trajectory(cfg, ec, i, ec.max_speed));
    MetricsReport report;
    report.kind = "ablation";
    for (ModelKind k : kinds) {
        report.rows.push_back(evaluate_model(cfg, models, k, trajectories, 0.0, ec.jobs));
    }
    report.extra_info = {{"trajectories", ec.n_trajectories}, {"max_speed", ec.max_speed}, {"seed", ec.seed}};
    return report;
}

struct SweepPoint {
    double speed = 0.0;
    ConfidenceInterval e_pos, e_vel;
};

// Fig. 2 analog: baseline error vs maximum allowed speed on a fixed set.
inline std::vector<SweepPoint> run_speed_sweep(const ArmConfig& cfg, const EvalConfig& ec) {
    std::vector<SweepPoint> points;
    TrainedModels none;
    for (double speed : ec.sweep_speeds) {
        std::vector<Trajectory> trajectories;
        for (int i = 0; i < ec.sweep_trajectories; ++i) trajectories.push_back(eval_trajectory(cfg, ec, i, speed));
        ModelMetrics m = evaluate_model(cfg, none, ModelKind::Baseline, trajectories, 0.0, ec.jobs);
        points.push_back({speed, m.pos_ci(), m.vel_ci()});
    }
    return points;
}

// Table III analog: baseline vs FIN-DWH at each payload, models trained
// payload-free. Payload 0 is included as the reference row.
inline MetricsReport run_payload_study(const ArmConfig& cfg, const TrainedModels& models,
                                       const EvalConfig& ec) {
    std::vector<Trajectory> trajectories;
    for (int i = 0; i < ec.payload_trajectories; ++i) {
        trajectories.push_back(eval_trajectory(cfg, ec, i, ec.max_speed));
    }
    Vec payloads = {0.0};
    payloads.insert(payloads.end(), ec.payloads.begin(), ec.payloads.end());
    MetricsReport report;
    report.kind = "payload";
    json per_payload = json::array();
    for (double payload : payloads) {
        ModelMetrics base = evaluate_model(cfg, models, ModelKind::Baseline, trajectories, payload, ec.jobs);
        base.name = "baseline@" + fmt_double(payload);
        ModelMetrics ours = evaluate_model(cfg, models, ModelKind::FinDwh, trajectories, payload, ec.jobs);
        ours.name = "fin-dwh@" + fmt_double(payload);
        per_payload.push_back({{"payload_kg", payload},
                               {"baseline_e_pos", base.pos_ci().mean},
                               {"fin_dwh_e_pos", ours.pos_ci().mean}});
        report.rows.push_back(std::move(base));
        report.rows.push_back(std::move(ours));
    }
    report.extra_info = {{"payloads", payloads}, {"trajectories", ec.payload_trajectories}, {"per_payload", per_payload}};
    return report;
}

inline void write_sweep_files(const std::vector<SweepPoint>& points, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream pos(dir + "/sweep_pos.csv"), vel(dir + "/sweep_vel.csv");
    pos << "x,y,ci\n";
    vel << "x,y,ci\n";
    for (const auto& p : points) {
        pos << fmt_double(p.speed) << "," << fmt_double(p.e_pos.mean) << "," << fmt_double(p.e_pos.half_width) << "\n";
        vel << fmt_double(p.speed) << "," << fmt_double(p.e_vel.mean) << "," << fmt_double(p.e_vel.half_width) << "\n";
    }
}

}  // namespace flexarm
