// flexarm: batch workbench for learned feed-forward trajectory tracking on a
// simulated series-elastic arm.
//
//   flexarm gen-data             generate and execute the training dataset
//   flexarm train <model>        train fin | dwh | fin-dwh | fc | rnn
//   flexarm eval <experiment>    run ablation | speed-sweep | payload
//   flexarm report               print tables from existing report files
//
// Configuration comes from a JSON file (--config); flags override file
// values. All outputs embed tool version, config digest and seed; reruns
// with identical inputs reproduce byte-identical data files (timestamps go
// to .meta.json sidecars).

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "flexarm/trajectory.hpp"
#include "flexarm/workbench.hpp"

namespace fs = std::filesystem;
using namespace flexarm;

namespace {

struct CliOptions {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double minutes = -1.0;
    int joints = 0;
    int jobs = 0;
    bool force = false;
};

RunConfig load_run_config(const CliOptions& opt) {
    RunConfig rc;
    if (const char* root = std::getenv("FLEXARM_OUT")) rc.out_dir = std::string(root) + "/default";
    if (!opt.config_path.empty()) {
        std::ifstream in(opt.config_path);
        if (!in) throw std::runtime_error("cannot open config file " + opt.config_path);
        json j = json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
        rc.apply_json(j);
    }
    // flag overrides, highest precedence
    json overrides = json::object();
    if (opt.seed_set) overrides["seed"] = opt.seed;
    if (!opt.out_dir.empty()) overrides["out_dir"] = opt.out_dir;
    if (opt.minutes >= 0.0) overrides["dataset"] = {{"minutes", opt.minutes}};
    if (opt.joints > 0) overrides["arm"] = {{"joints", opt.joints}};
    if (opt.jobs > 0) overrides["eval"] = {{"jobs", opt.jobs}};
    rc.apply_json(overrides);
    return rc;
}

void write_sidecar(const std::string& path, const RunConfig& rc) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    json meta = {{"written_unix_ms", std::chrono::duration_cast<std::chrono::milliseconds>(now).count()},
                 {"tool_version", kVersion},
                 {"config_digest", rc.config_digest()}};
    std::ofstream out(path);
    out << meta.dump(2) << "\n";
}

std::vector<ExecutionRecord> load_records(const std::string& data_dir) {
    std::vector<fs::path> files;
    const fs::path dir = fs::path(data_dir) / "records";
    if (!fs::exists(dir)) throw std::runtime_error("no dataset at " + dir.string() + "; run `flexarm gen-data` first");
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".txt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("dataset directory is empty: " + dir.string());
    std::vector<ExecutionRecord> records;
    records.reserve(files.size());
    for (const auto& f : files) records.push_back(read_record(f.string()));
    return records;
}

int cmd_gen_data(const RunConfig& rc, bool force) {
    const fs::path data_dir = fs::path(rc.out_dir) / "data";
    const fs::path rec_dir = data_dir / "records";
    if (fs::exists(rec_dir) && !fs::is_empty(rec_dir) && !force) {
        throw std::runtime_error("output directory " + rec_dir.string() + " is not empty (use --force)");
    }
    fs::create_directories(rec_dir);
    std::printf("generating %.1f minutes of functional trajectories (tiers:", rc.dataset.minutes);
    for (double t : rc.dataset.tiers) std::printf(" %.1f", t);
    std::printf(" rad/s, seed %llu)\n", static_cast<unsigned long long>(rc.seed));
    auto records = generate_dataset(rc.arm, rc.dataset, [](std::size_t n) {
        if (n % 25 == 0) std::printf("  %zu trajectories executed\n", n);
    });
    json tiers_summary = json::array();
    std::map<double, std::pair<int, double>> per_tier;
    for (std::size_t i = 0; i < records.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "rec_%05zu.txt", i);
        write_record((rec_dir / name).string(), records[i]);
        auto& [count, seconds] = per_tier[records[i].meta.max_speed];
        ++count;
        seconds += nominal_duration(records[i]);
    }
    double total_minutes = 0.0;
    for (const auto& [speed, cs] : per_tier) {
        tiers_summary.push_back({{"max_speed", speed}, {"trajectories", cs.first}, {"minutes", cs.second / 60.0}});
        total_minutes += cs.second / 60.0;
    }
    json manifest = {{"tool_version", kVersion},
                     {"seed", rc.seed},
                     {"config_digest", rc.config_digest()},
                     {"records", records.size()},
                     {"total_minutes", total_minutes},
                     {"tiers", tiers_summary}};
    std::ofstream mf(data_dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
    write_sidecar((data_dir / "manifest.meta.json").string(), rc);
    std::printf("wrote %zu records (%.1f min) to %s\n", records.size(), total_minutes, rec_dir.string().c_str());
    return 0;
}

void write_loss_curve(const std::string& path, const TrainResult& r) {
    std::ofstream out(path);
    out << "epoch,train_loss,val_mse\n";
    for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
        out << e << "," << fmt_double(r.train_loss[e]) << "," << fmt_double(r.val_loss[e]) << "\n";
    }
}

int cmd_train(const RunConfig& rc, const std::string& model_name) {
    const fs::path model_dir = fs::path(rc.out_dir) / "models";
    fs::create_directories(model_dir);
    auto records = load_records((fs::path(rc.out_dir) / "data").string());
    const int N = rc.arm.N;
    TrainResult result;
    std::size_t n_params = 0;
    json metadata = {{"config_digest", rc.config_digest()}, {"model", model_name}};
    const std::string weight_path = (model_dir / (model_name + ".weights")).string();

    if (model_name == "fin") {
        Mlp m = train_fin_model(records, rc, &result);
        n_params = m.n_params();
        save_model(weight_path, m, rc.seed, metadata);
    } else if (model_name == "fc") {
        Mlp m = train_fc_model(records, rc, &result);
        n_params = m.n_params();
        save_model(weight_path, m, rc.seed, metadata);
    } else if (model_name == "dwh") {
        DwhModel m = train_dwh_model(records, rc, &result);
        n_params = m.n_params();
        save_model(weight_path, m, rc.seed, metadata);
    } else if (model_name == "rnn") {
        RnnModel m = train_rnn_model(records, rc, &result);
        n_params = m.n_params();
        save_model(weight_path, m, rc.seed, metadata);
    } else if (model_name == "fin-dwh") {
        const std::string fin_path = (model_dir / "fin.weights").string();
        if (!fs::exists(fin_path)) {
            throw std::runtime_error("fin-dwh needs FIN weights; run `flexarm train fin` first");
        }
        Mlp fin = load_mlp(fin_path, "fin", N);
        FinDwhModel m = train_fin_dwh_model(records, fin, rc, &result);
        n_params = m.n_params();
        metadata["fin_digest"] = hex64(parameters_digest(m.fin.parameters()));
        save_model(weight_path, m, rc.seed, metadata);
    } else {
        throw std::runtime_error("unknown model \"" + model_name + "\" (expected fin|dwh|fin-dwh|fc|rnn)");
    }
    write_loss_curve((model_dir / (model_name + ".loss.csv")).string(), result);
    {
        std::ofstream snap(model_dir / (model_name + ".config.json"));
        snap << rc.to_json().dump(2) << "\n";
    }
    write_sidecar((model_dir / (model_name + ".meta.json")).string(), rc);
    std::printf("trained %s: %zu parameters, %d epochs, best val MSE %.6g (epoch %d)\n",
                model_name.c_str(), n_params, result.epochs_run, result.best_val, result.best_epoch);
    return 0;
}

TrainedModels load_available_models(const RunConfig& rc, const std::vector<std::string>& required) {
    const fs::path model_dir = fs::path(rc.out_dir) / "models";
    TrainedModels models;
    auto path = [&](const std::string& n) { return (model_dir / (n + ".weights")).string(); };
    for (const auto& name : required) {
        if (name == "baseline") continue;
        if (!fs::exists(path(name))) {
            throw std::runtime_error("missing weights for model \"" + name + "\"; run `flexarm train " + name + "`");
        }
        if (name == "fc") models.fc = load_mlp(path(name), "fc", rc.arm.N);
        else if (name == "rnn") models.rnn = load_rnn(path(name), rc.arm.N, rc.rnn_hidden);
        else if (name == "dwh") models.dwh = load_dwh(path(name), rc.arm.N, false);
        else if (name == "fin-dwh") models.fin_dwh = load_fin_dwh(path(name), rc.arm.N);
    }
    return models;
}

// Optional CI thresholds from the config's "thresholds" object.
int check_thresholds(const RunConfig& rc, const MetricsReport& report) {
    if (rc.thresholds.empty()) return 0;
    double base_pos = 0.0, base_extra = 0.0, ours_pos = 0.0, ours_extra = 0.0;
    bool have_base = false, have_ours = false;
    for (const auto& r : report.rows) {
        if (r.name == "baseline") {
            base_pos = r.pos_ci().mean;
            base_extra = r.extra_ci().mean;
            have_base = true;
        }
        if (r.name == "fin-dwh") {
            ours_pos = r.pos_ci().mean;
            ours_extra = r.extra_ci().mean;
            have_ours = true;
        }
    }
    if (!have_base || !have_ours) return 0;
    int rcode = 0;
    if (rc.thresholds.contains("min_pos_improvement_pct")) {
        const double want = rc.thresholds["min_pos_improvement_pct"].get<double>();
        const double got = improvement_pct(base_pos, ours_pos);
        if (got < want) {
            std::fprintf(stderr, "E-EVAL: position improvement %.1f%% below threshold %.1f%%\n", got, want);
            rcode = 2;
        }
    }
    if (rc.thresholds.contains("max_extra_time_ratio")) {
        const double want = rc.thresholds["max_extra_time_ratio"].get<double>();
        if (base_extra > 0.0 && ours_extra / base_extra > want) {
            std::fprintf(stderr, "E-EVAL: extra-time ratio %.2f above threshold %.2f\n", ours_extra / base_extra, want);
            rcode = 2;
        }
    }
    return rcode;
}

int cmd_eval(const RunConfig& rc, const std::string& experiment) {
    const fs::path report_dir = fs::path(rc.out_dir) / "reports";
    fs::create_directories(report_dir);
    int rcode = 0;
    if (experiment == "ablation") {
        std::vector<std::string> wanted = {"baseline", "fc", "rnn", "dwh", "fin-dwh"};
        // run with whatever learned models exist; baseline always runs
        std::vector<std::string> present = {"baseline"};
        for (const auto& n : wanted) {
            if (n != "baseline" && fs::exists(fs::path(rc.out_dir) / "models" / (n + ".weights"))) present.push_back(n);
        }
        TrainedModels models = load_available_models(rc, present);
        std::vector<ModelKind> kinds;
        for (const auto& n : present) {
            if (n == "baseline") kinds.push_back(ModelKind::Baseline);
            else if (n == "fc") kinds.push_back(ModelKind::Fc);
            else if (n == "rnn") kinds.push_back(ModelKind::Rnn);
            else if (n == "dwh") kinds.push_back(ModelKind::Dwh);
            else kinds.push_back(ModelKind::FinDwh);
        }
        MetricsReport report = run_ablation(rc.arm, models, rc.eval, kinds);
        report.extra_info["config_digest"] = rc.config_digest();
        report.extra_info["seed"] = rc.seed;
        report.write_csv((report_dir / "ablation.csv").string());
        std::ofstream js(report_dir / "ablation.json");
        js << report.to_json().dump(2) << "\n";
        write_sidecar((report_dir / "ablation.meta.json").string(), rc);
        std::printf("ablation report: %zu rows -> %s\n", report.rows.size(), (report_dir / "ablation.csv").string().c_str());
        rcode = check_thresholds(rc, report);
    } else if (experiment == "speed-sweep") {
        auto points = run_speed_sweep(rc.arm, rc.eval);
        write_sweep_files(points, report_dir.string());
        json j = json::array();
        for (const auto& p : points) {
            j.push_back({{"speed", p.speed}, {"e_pos", p.e_pos.mean}, {"e_pos_ci", p.e_pos.half_width},
                         {"e_vel", p.e_vel.mean}, {"e_vel_ci", p.e_vel.half_width}});
        }
        std::ofstream js(report_dir / "sweep.json");
        js << json{{"experiment", "speed-sweep"}, {"tool_version", kVersion}, {"seed", rc.seed},
                   {"config_digest", rc.config_digest()}, {"points", j}}
                  .dump(2)
           << "\n";
        write_sidecar((report_dir / "sweep.meta.json").string(), rc);
        std::printf("speed sweep: %zu points -> %s\n", points.size(), (report_dir / "sweep_pos.csv").string().c_str());
    } else if (experiment == "payload") {
        TrainedModels models = load_available_models(rc, {"fin-dwh"});
        MetricsReport report = run_payload_study(rc.arm, models, rc.eval);
        report.extra_info["config_digest"] = rc.config_digest();
        report.extra_info["seed"] = rc.seed;
        report.write_csv((report_dir / "payload.csv").string());
        std::ofstream js(report_dir / "payload.json");
        js << report.to_json().dump(2) << "\n";
        write_sidecar((report_dir / "payload.meta.json").string(), rc);
        std::printf("payload study: %zu rows -> %s\n", report.rows.size(), (report_dir / "payload.csv").string().c_str());
    } else {
        throw std::runtime_error("unknown experiment \"" + experiment + "\" (expected ablation|speed-sweep|payload)");
    }
    return rcode;
}

int cmd_report(const RunConfig& rc) {
    const fs::path report_dir = fs::path(rc.out_dir) / "reports";
    bool any = false;
    for (const char* name : {"ablation", "payload"}) {
        const fs::path p = report_dir / (std::string(name) + ".json");
        if (!fs::exists(p)) continue;
        any = true;
        std::ifstream in(p);
        json j = json::parse(in);
        std::printf("== %s ==\n", name);
        std::printf("%-16s %12s %12s %12s %12s\n", "model", "e_pos[rad]", "e_vel[rad/s]", "e_eef[m]", "extra[s]");
        for (const auto& row : j["rows"]) {
            std::printf("%-16s %7.4f±%.4f %6.3f±%.3f %7.4f±%.4f %6.2f±%.2f\n",
                        row["model"].get<std::string>().c_str(),
                        row["e_pos_rad"]["mean"].get<double>(), row["e_pos_rad"]["ci95"].get<double>(),
                        row["e_vel_rad_s"]["mean"].get<double>(), row["e_vel_rad_s"]["ci95"].get<double>(),
                        row["e_eef_m"]["mean"].get<double>(), row["e_eef_m"]["ci95"].get<double>(),
                        row["extra_time_s"]["mean"].get<double>(), row["extra_time_s"]["ci95"].get<double>());
        }
        std::printf("\n");
    }
    const fs::path sweep = report_dir / "sweep.json";
    if (fs::exists(sweep)) {
        any = true;
        std::ifstream in(sweep);
        json j = json::parse(in);
        std::printf("== speed sweep (baseline) ==\n%8s %12s %12s\n", "speed", "e_pos[rad]", "e_vel[rad/s]");
        for (const auto& p : j["points"]) {
            std::printf("%8.2f %7.4f±%.4f %6.3f±%.3f\n", p["speed"].get<double>(),
                        p["e_pos"].get<double>(), p["e_pos_ci"].get<double>(),
                        p["e_vel"].get<double>(), p["e_vel_ci"].get<double>());
        }
    }
    if (!any) std::printf("no reports under %s; run `flexarm eval` first\n", report_dir.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flexarm: learned feed-forward trajectory tracking workbench"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    CliOptions opt;
    app.add_option("--config", opt.config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", opt.out_dir, "output directory (overrides config)");
    app.add_option("--seed", opt.seed, "random seed (overrides config)")->each([&](const std::string&) { opt.seed_set = true; });
    app.add_option("--jobs", opt.jobs, "evaluation worker threads");
    app.add_option("--joints", opt.joints, "arm joint count (overrides config)");

    auto* gen = app.add_subcommand("gen-data", "generate and execute the training dataset");
    gen->add_option("--minutes", opt.minutes, "dataset size in simulated minutes");
    gen->add_flag("--force", opt.force, "overwrite an existing dataset");

    std::string model_name;
    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("model", model_name, "fin | dwh | fin-dwh | fc | rnn")->required();

    std::string experiment;
    auto* eval = app.add_subcommand("eval", "run an experiment");
    eval->add_option("experiment", experiment, "ablation | speed-sweep | payload")->required();

    auto* report = app.add_subcommand("report", "print tables from existing reports");

    CLI11_PARSE(app, argc, argv);

    const char* prefix = "E-CONFIG";
    try {
        RunConfig rc = load_run_config(opt);
        if (gen->parsed()) {
            prefix = "E-DATA";
            return cmd_gen_data(rc, opt.force);
        }
        if (train->parsed()) {
            prefix = "E-TRAIN";
            return cmd_train(rc, model_name);
        }
        if (eval->parsed()) {
            prefix = "E-EVAL";
            return cmd_eval(rc, experiment);
        }
        if (report->parsed()) {
            prefix = "E-EVAL";
            return cmd_report(rc);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s: %s\n", prefix, e.what());
        return 1;
    }
    return 0;
}
