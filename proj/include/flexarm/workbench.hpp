#pragma once

// Run configuration (single structured config file, CLI flags override) and
// the training entry points shared by the command-line tool and the
// integration suite.

#include <json.hpp>
#include <map>
#include <string>

#include "experiments.hpp"

namespace flexarm {

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "runs/default";
    ArmConfig arm = ArmConfig::defaults(3);
    DatasetSpec dataset;
    // published training hyperparameters per model
    TrainConfig fin_cfg{1e-4, 32, 1, 500, 20, 1e-4, 0.1, 1};
    TrainConfig dwh_cfg{1e-4, 32, 64, 500, 20, 1e-4, 0.1, 1};
    TrainConfig fin_dwh_cfg{1e-4, 32, 64, 500, 20, 1e-4, 0.1, 1};
    TrainConfig fc_cfg{2e-4, 24, 1, 500, 20, 1e-4, 0.1, 1};
    TrainConfig rnn_cfg{1.5e-4, 48, 64, 500, 20, 1e-4, 0.1, 1};
    int rnn_hidden = 14;
    EvalConfig eval;
    json thresholds = json::object();  // optional CI gates for `eval`

    static void train_from_json(TrainConfig& tc, const json& j) {
        tc.lr = j.value("lr", tc.lr);
        tc.batch = j.value("batch", tc.batch);
        tc.window = j.value("window", tc.window);
        tc.max_epochs = j.value("epochs", tc.max_epochs);
        tc.patience = j.value("patience", tc.patience);
        tc.l2 = j.value("l2", tc.l2);
        tc.val_fraction = j.value("val_fraction", tc.val_fraction);
    }

    static json train_to_json(const TrainConfig& tc) {
        return json{{"lr", tc.lr},       {"batch", tc.batch},       {"window", tc.window},
                    {"epochs", tc.max_epochs}, {"patience", tc.patience}, {"l2", tc.l2},
                    {"val_fraction", tc.val_fraction}};
    }

    void apply_json(const json& j) {
        seed = j.value("seed", seed);
        out_dir = j.value("out_dir", out_dir);
        if (j.contains("arm")) {
            const auto& a = j.at("arm");
            const int N = a.value("joints", arm.N);
            ArmConfig base = ArmConfig::defaults(N);
            auto vec = [&](const char* key, Vec& target) {
                if (!a.contains(key)) return;
                if (a.at(key).is_number()) {
                    target.assign(static_cast<std::size_t>(N), a.at(key).get<double>());
                } else {
                    target = a.at(key).get<Vec>();
                }
            };
            vec("mass", base.mass);
            vec("length", base.length);
            vec("com", base.com);
            vec("inertia", base.inertia);
            vec("stiffness", base.stiffness);
            vec("motor_inertia", base.motor_inertia);
            vec("damp_link", base.damp_link);
            vec("damp_motor", base.damp_motor);
            vec("kp", base.kp);
            vec("kd", base.kd);
            vec("q_lower", base.q_lower);
            vec("q_upper", base.q_upper);
            base.gravity = a.value("gravity", base.gravity);
            base.dt_sim = a.value("dt_sim", base.dt_sim);
            base.mass_error_factor = a.value("mass_error_factor", base.mass_error_factor);
            base.torque_limit = a.value("torque_limit", base.torque_limit);
            base.hold_time = a.value("hold_time", base.hold_time);
            base.validate();
            arm = base;
        }
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            dataset.minutes = d.value("minutes", dataset.minutes);
            if (d.contains("tiers")) dataset.tiers = d.at("tiers").get<Vec>();
            dataset.waypoint_prob = d.value("waypoint_prob", dataset.waypoint_prob);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            if (t.contains("fin")) train_from_json(fin_cfg, t.at("fin"));
            if (t.contains("dwh")) train_from_json(dwh_cfg, t.at("dwh"));
            if (t.contains("fin-dwh")) train_from_json(fin_dwh_cfg, t.at("fin-dwh"));
            if (t.contains("fc")) train_from_json(fc_cfg, t.at("fc"));
            if (t.contains("rnn")) {
                train_from_json(rnn_cfg, t.at("rnn"));
                rnn_hidden = t.at("rnn").value("hidden", rnn_hidden);
            }
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            eval.n_trajectories = e.value("trajectories", eval.n_trajectories);
            eval.max_speed = e.value("max_speed", eval.max_speed);
            if (e.contains("payloads")) eval.payloads = e.at("payloads").get<Vec>();
            if (e.contains("sweep_speeds")) eval.sweep_speeds = e.at("sweep_speeds").get<Vec>();
            eval.sweep_trajectories = e.value("sweep_trajectories", eval.sweep_trajectories);
            eval.payload_trajectories = e.value("payload_trajectories", eval.payload_trajectories);
            eval.seed = e.value("seed", eval.seed);
            eval.jobs = e.value("jobs", eval.jobs);
        }
        if (j.contains("thresholds")) thresholds = j.at("thresholds");
        dataset.seed = seed;
    }

    json to_json() const {
        return json{
            {"seed", seed},
            {"out_dir", out_dir},
            {"arm",
             {{"joints", arm.N}, {"mass", arm.mass}, {"length", arm.length}, {"com", arm.com},
              {"inertia", arm.inertia}, {"stiffness", arm.stiffness}, {"motor_inertia", arm.motor_inertia},
              {"damp_link", arm.damp_link}, {"damp_motor", arm.damp_motor}, {"kp", arm.kp}, {"kd", arm.kd},
              {"q_lower", arm.q_lower}, {"q_upper", arm.q_upper}, {"gravity", arm.gravity},
              {"dt_sim", arm.dt_sim}, {"mass_error_factor", arm.mass_error_factor},
              {"torque_limit", arm.torque_limit}, {"hold_time", arm.hold_time}}},
            {"dataset", {{"minutes", dataset.minutes}, {"tiers", dataset.tiers}, {"waypoint_prob", dataset.waypoint_prob}}},
            {"train",
             {{"fin", train_to_json(fin_cfg)}, {"dwh", train_to_json(dwh_cfg)},
              {"fin-dwh", train_to_json(fin_dwh_cfg)}, {"fc", train_to_json(fc_cfg)},
              {"rnn", train_to_json(rnn_cfg)}}},
            {"rnn_hidden", rnn_hidden},
            {"eval",
             {{"trajectories", eval.n_trajectories}, {"max_speed", eval.max_speed},
              {"payloads", eval.payloads}, {"sweep_speeds", eval.sweep_speeds},
              {"sweep_trajectories", eval.sweep_trajectories},
              {"payload_trajectories", eval.payload_trajectories}, {"seed", eval.seed},
              {"jobs", eval.jobs}}},
            {"thresholds", thresholds}};
    }

    std::string config_digest() const { return hex64(fnv1a64(to_json().dump())); }
};

// ---------------------------------------------------------------------------
// Training entry points (seeded, deterministic)

inline Rng seeded_rng(std::uint64_t seed, const std::string& tag) {
    return Rng(seed ^ fnv1a64(tag));
}

inline Mlp train_fin_model(const std::vector<ExecutionRecord>& records, const RunConfig& rc,
                           TrainResult* result = nullptr) {
    Rng rng = seeded_rng(rc.seed, "init:fin");
    Mlp fin = build_fin(rc.arm.N, rng);
    auto dataset = build_fin_dataset(records);
    std::vector<SampleWindow> train, val;
    TrainConfig cfg = rc.fin_cfg;
    cfg.seed = rc.seed;
    split_by_record(dataset, cfg.val_fraction, cfg.seed, train, val);
    TrainResult r = train_mlp(fin, train, val, cfg);
    if (result) *result = r;
    return fin;
}

inline Mlp train_fc_model(const std::vector<ExecutionRecord>& records, const RunConfig& rc,
                          TrainResult* result = nullptr) {
    Rng rng = seeded_rng(rc.seed, "init:fc");
    Mlp fc = build_fc_baseline(rc.arm.N, rng);
    auto dataset = build_fin_dataset(her_invert(records));
    std::vector<SampleWindow> train, val;
    TrainConfig cfg = rc.fc_cfg;
    cfg.seed = rc.seed;
    split_by_record(dataset, cfg.val_fraction, cfg.seed, train, val);
    TrainResult r = train_mlp(fc, train, val, cfg);
    if (result) *result = r;
    return fc;
}

inline DwhModel train_dwh_model(const std::vector<ExecutionRecord>& records, const RunConfig& rc,
                                TrainResult* result = nullptr) {
    Rng rng = seeded_rng(rc.seed, "init:dwh");
    DwhModel dwh = build_dwh(rc.arm.N, /*augmented=*/false, rng);
    auto windows = build_window_dataset(her_invert(records), rc.dwh_cfg.window);
    std::vector<SampleWindow> train, val;
    TrainConfig cfg = rc.dwh_cfg;
    cfg.seed = rc.seed;
    split_by_record(windows, cfg.val_fraction, cfg.seed, train, val);
    TrainResult r = train_dwh(dwh, train, val, cfg);
    if (result) *result = r;
    return dwh;
}

inline FinDwhModel train_fin_dwh_model(const std::vector<ExecutionRecord>& records, const Mlp& fin,
                                       const RunConfig& rc, TrainResult* result = nullptr) {
    Rng rng = seeded_rng(rc.seed, "init:fin-dwh");
    FinDwhModel model = build_fin_dwh(rc.arm.N, fin, rng);
    auto windows = build_window_dataset(her_invert(records), rc.fin_dwh_cfg.window);
    TrainConfig cfg = rc.fin_dwh_cfg;
    cfg.seed = rc.seed;
    TrainResult r = train_fin_dwh(model, windows, cfg);
    if (result) *result = r;
    return model;
}

inline RnnModel train_rnn_model(const std::vector<ExecutionRecord>& records, const RunConfig& rc,
                                TrainResult* result = nullptr) {
    Rng rng = seeded_rng(rc.seed, "init:rnn");
    RnnModel rnn = build_rnn_baseline(rc.arm.N, rc.rnn_hidden, rng);
    auto windows = build_window_dataset(her_invert(records), rc.rnn_cfg.window);
    std::vector<SampleWindow> train, val;
    TrainConfig cfg = rc.rnn_cfg;
    cfg.seed = rc.seed;
    split_by_record(windows, cfg.val_fraction, cfg.seed, train, val);
    TrainResult r = train_rnn(rnn, train, val, cfg);
    if (result) *result = r;
    return rnn;
}

// ---------------------------------------------------------------------------
// Model persistence helpers

template <typename Model>
void save_model(const std::string& path, Model& model, std::uint64_t seed,
                const json& metadata = json::object()) {
    save_weights(path, model.fingerprint(), model.parameters(), seed, metadata);
}

inline Mlp load_mlp(const std::string& path, const std::string& kind, int N) {
    Mlp m(kind, N);
    load_weights(path, m.fingerprint(), m.parameters());
    return m;
}

inline DwhModel load_dwh(const std::string& path, int N, bool augmented) {
    DwhModel m(N, augmented);
    load_weights(path, m.fingerprint(), m.parameters());
    return m;
}

inline FinDwhModel load_fin_dwh(const std::string& path, int N) {
    FinDwhModel m(N);
    load_weights(path, m.fingerprint(), m.parameters());
    m.freeze_fin();
    return m;
}

inline RnnModel load_rnn(const std::string& path, int N, int hidden) {
    RnnModel m(N, hidden);
    load_weights(path, m.fingerprint(), m.parameters());
    return m;
}

}  // namespace flexarm
