#pragma once

// Joint-space trajectories sampled at a fixed rate and paired
// desired/actual execution records, with delimited-text serialization.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"

namespace flexarm {

struct Trajectory {
    int joints = 0;
    double dt = 0.05;
    std::vector<Vec> pos;  // [t] -> N-vector, rad
    std::vector<Vec> vel;  // rad/s
    std::vector<Vec> acc;  // rad/s^2

    std::size_t length() const { return pos.size(); }

    void resize(std::size_t T) {
        pos.assign(T, Vec(static_cast<std::size_t>(joints), 0.0));
        vel.assign(T, Vec(static_cast<std::size_t>(joints), 0.0));
        acc.assign(T, Vec(static_cast<std::size_t>(joints), 0.0));
    }

    void validate() const {
        if (joints < 1) throw std::invalid_argument("Trajectory: joints must be positive");
        if (vel.size() != pos.size() || acc.size() != pos.size()) {
            throw std::invalid_argument("Trajectory: pos/vel/acc length mismatch");
        }
        for (std::size_t t = 0; t < pos.size(); ++t) {
            if (static_cast<int>(pos[t].size()) != joints || static_cast<int>(vel[t].size()) != joints ||
                static_cast<int>(acc[t].size()) != joints) {
                throw std::invalid_argument("Trajectory: joint-width mismatch at t=" + std::to_string(t));
            }
        }
    }
};

struct RecordMeta {
    double max_speed = 0.0;  // rad/s
    double payload = 0.0;    // kg
    std::uint64_t seed = 0;
    bool inverted = false;
    std::size_t nominal_length = 0;  // samples of the commanded trajectory (hold tail excluded)
};

// One simulated execution: the training unit.
struct ExecutionRecord {
    Trajectory desired;
    Trajectory actual;
    RecordMeta meta;

    void validate() const {
        desired.validate();
        actual.validate();
        if (desired.length() != actual.length()) {
            throw std::invalid_argument("ExecutionRecord: desired/actual length mismatch");
        }
        if (desired.dt != actual.dt) throw std::invalid_argument("ExecutionRecord: dt mismatch");
    }
};

inline void write_record(const std::string& path, const ExecutionRecord& rec) {
    rec.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_record: cannot open " + path);
    const int N = rec.desired.joints;
    out << "# flexarm-record-v1\n";
    out << "# tool_version " << kVersion << "\n";
    out << "# joints " << N << "\n";
    out << "# dt " << fmt_double(rec.desired.dt) << "\n";
    out << "# max_speed " << fmt_double(rec.meta.max_speed) << "\n";
    out << "# payload " << fmt_double(rec.meta.payload) << "\n";
    out << "# seed " << rec.meta.seed << "\n";
    out << "# inverted " << (rec.meta.inverted ? 1 : 0) << "\n";
    out << "# nominal_length " << rec.meta.nominal_length << "\n";
    out << "# columns t";
    const char* groups[6] = {"th_d", "thd_d", "thdd_d", "th_a", "thd_a", "thdd_a"};
    for (const char* g : groups) {
        for (int n = 0; n < N; ++n) out << " " << g << "[" << n << "]";
    }
    out << "\n";
    for (std::size_t t = 0; t < rec.desired.length(); ++t) {
        out << fmt_double(static_cast<double>(t) * rec.desired.dt);
        const Vec* cols[6] = {&rec.desired.pos[t], &rec.desired.vel[t], &rec.desired.acc[t],
                              &rec.actual.pos[t], &rec.actual.vel[t], &rec.actual.acc[t]};
        for (const Vec* c : cols) {
            for (int n = 0; n < N; ++n) out << " " << fmt_double((*c)[n]);
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write_record: write failed for " + path);
}

inline ExecutionRecord read_record(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_record: cannot open " + path);
    ExecutionRecord rec;
    int N = 0;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream is(line.substr(1));
            std::string key;
            is >> key;
            if (key == "flexarm-record-v1") header_seen = true;
            else if (key == "joints") is >> N;
            else if (key == "dt") { is >> rec.desired.dt; rec.actual.dt = rec.desired.dt; }
            else if (key == "max_speed") is >> rec.meta.max_speed;
            else if (key == "payload") is >> rec.meta.payload;
            else if (key == "seed") is >> rec.meta.seed;
            else if (key == "inverted") { int v = 0; is >> v; rec.meta.inverted = v != 0; }
            else if (key == "nominal_length") is >> rec.meta.nominal_length;
            continue;
        }
        if (!header_seen || N < 1) throw std::runtime_error("read_record: malformed header in " + path);
        rec.desired.joints = N;
        rec.actual.joints = N;
        std::istringstream is(line);
        double t;
        is >> t;
        Vec row(static_cast<std::size_t>(6 * N));
        for (auto& v : row) {
            if (!(is >> v)) throw std::runtime_error("read_record: short row in " + path);
        }
        auto slice = [&](int g) { return Vec(row.begin() + g * N, row.begin() + (g + 1) * N); };
        rec.desired.pos.push_back(slice(0));
        rec.desired.vel.push_back(slice(1));
        rec.desired.acc.push_back(slice(2));
        rec.actual.pos.push_back(slice(3));
        rec.actual.vel.push_back(slice(4));
        rec.actual.acc.push_back(slice(5));
    }
    if (rec.meta.nominal_length == 0) rec.meta.nominal_length = rec.desired.length();
    rec.validate();
    return rec;
}

}  // namespace flexarm
