#pragma once

// Per-round record of an active-learning run and its CSV form:
//
//   round,samples,train_err,test_err,rank,objective,wall_ms
//
// Reals are written with 17 significant digits so the file parses back to
// the exact doubles.

#include <tensoruq/errors.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tensoruq::harness {

struct RoundRecord {
    int round = 0;
    long long samples = 0;
    double train_err = 0.0;
    double test_err = 0.0;   ///< NaN when no test set is available
    int rank = 0;
    double objective = 0.0;
    double wall_ms = 0.0;

    bool operator==(const RoundRecord&) const = default;
};

using RunHistory = std::vector<RoundRecord>;

inline constexpr const char* kHistoryHeader = "round,samples,train_err,test_err,rank,objective,wall_ms";

namespace detail {

inline std::string format_real(double v)
{
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline std::string history_csv(const RunHistory& history)
{
    std::string out = kHistoryHeader;
    out += '\n';
    for (const auto& r : history) {
        out += std::to_string(r.round) + ',' + std::to_string(r.samples) + ',' + detail::format_real(r.train_err) + ',' +
               detail::format_real(r.test_err) + ',' + std::to_string(r.rank) + ',' +
               detail::format_real(r.objective) + ',' + detail::format_real(r.wall_ms) + '\n';
    }
    return out;
}

inline void emit_history(const RunHistory& history, const std::filesystem::path& path)
{
    if (history.empty()) throw std::invalid_argument("emit_history: empty history");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << history_csv(history);
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline RunHistory parse_history(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw load_error("cannot open history " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kHistoryHeader) throw load_error("history header mismatch");
    RunHistory h;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 7) throw load_error("history row with " + std::to_string(f.size()) + " fields");
        try {
            h.push_back({std::stoi(f[0]), std::stoll(f[1]), std::stod(f[2]), std::stod(f[3]), std::stoi(f[4]),
                         std::stod(f[5]), std::stod(f[6])});
        } catch (const std::exception&) {
            throw load_error("malformed history row: " + line);
        }
    }
    return h;
}

} // namespace tensoruq::harness
