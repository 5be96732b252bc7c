#pragma once

// Weight file format: a single JSON header line (architecture fingerprint,
// shape table, seed, metadata, payload size), a newline, then the raw
// little-endian 64-bit float payload in shape-table order.

#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"
#include "nn.hpp"

namespace flexarm {

using json = nlohmann::json;

inline std::uint64_t parameters_digest(const std::vector<Parameter*>& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto* p : params) h = digest(p->value, h);
    return h;
}

inline void save_weights(const std::string& path, const std::string& fingerprint,
                         const std::vector<Parameter*>& params, std::uint64_t seed,
                         const json& metadata = json::object()) {
    json shapes = json::array();
    std::size_t total = 0;
    for (const auto* p : params) {
        shapes.push_back({{"name", p->name}, {"shape", p->shape}, {"trainable", p->trainable}});
        total += p->size();
    }
    json header = {{"format", "flexarm-weights-v1"},
                   {"tool_version", kVersion},
                   {"fingerprint", fingerprint},
                   {"seed", seed},
                   {"payload_doubles", total},
                   {"shapes", shapes},
                   {"metadata", metadata}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_weights: cannot open " + path);
    out << header.dump() << "\n";
    for (const auto* p : params) {
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("save_weights: write failed for " + path);
}

inline json read_weights_header(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_weights: empty file " + path);
    json header = json::parse(line);
    if (header.value("format", "") != "flexarm-weights-v1") {
        throw std::runtime_error("load_weights: unrecognized format in " + path);
    }
    return header;
}

inline json peek_weights_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_weights: cannot open " + path);
    return read_weights_header(in, path);
}

inline json load_weights(const std::string& path, const std::string& expected_fingerprint,
                         const std::vector<Parameter*>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_weights: cannot open " + path);
    json header = read_weights_header(in, path);
    const std::string fp = header.value("fingerprint", "");
    if (fp != expected_fingerprint) {
        throw std::runtime_error("load_weights: fingerprint mismatch: file has \"" + fp +
                                 "\", model expects \"" + expected_fingerprint + "\"");
    }
    const auto& shapes = header.at("shapes");
    if (shapes.size() != params.size()) {
        throw std::runtime_error("load_weights: parameter count mismatch in " + path);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto shape = shapes[i].at("shape").get<std::vector<std::size_t>>();
        if (shape != params[i]->shape) {
            throw std::runtime_error("load_weights: shape mismatch for " + params[i]->name);
        }
    }
    for (auto* p : params) {
        in.read(reinterpret_cast<char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
        if (!in) throw std::runtime_error("load_weights: truncated payload in " + path);
    }
    return header;
}

}  // namespace flexarm
