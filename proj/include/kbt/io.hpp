#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kbt/gcm.hpp"
#include "kbt/logrank.hpp"
#include "kbt/mmd.hpp"
#include "kbt/report.hpp"
#include "kbt/simlab.hpp"
#include "kbt/spectrum.hpp"

namespace kbt {

// 17 significant digits: the shortest fixed precision that round-trips every
// double exactly, so equal configurations produce byte-identical output.
inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

inline std::string json_number_array(const std::vector<double>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fmt17(v[i]);
    }
    return out + "]";
}

inline std::string json_string_array(const std::vector<std::string>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += "\"" + json_escape(v[i]) + "\"";
    }
    return out + "]";
}

inline std::string json_kernel(const KernelEcho& k) {
    return "{\"family\": \"" + json_escape(k.family) +
           "\", \"lengthscale_sq\": " + fmt17(k.lengthscale_sq) + ", \"rule\": \"" +
           json_escape(k.rule) + "\"}";
}

}  // namespace detail

inline std::string to_json(const TestReport& r, bool emit_replicates = false) {
    std::string out = "{\n";
    out += "  \"test\": \"" + detail::json_escape(r.test) + "\",\n";
    out += "  \"n\": " + std::to_string(r.n) + ",\n";
    out += "  \"statistic\": " + fmt17(r.statistic) + ",\n";
    out += "  \"critical_value\": " + fmt17(r.critical_value) + ",\n";
    out += "  \"p_value\": " + fmt17(r.p_value) + ",\n";
    out += std::string("  \"reject\": ") + (r.reject ? "true" : "false") + ",\n";
    out += "  \"alpha\": " + fmt17(r.alpha) + ",\n";
    out += "  \"M\": " + std::to_string(r.M) + ",\n";
    out += "  \"kernel\": " + detail::json_kernel(r.kernel) + ",\n";
    out += "  \"scheme\": \"" + detail::json_escape(r.scheme) + "\",\n";
    out += "  \"seed\": " + std::to_string(r.seed) + ",\n";
    out += "  \"details\": {";
    for (std::size_t i = 0; i < r.details.size(); ++i) {
        if (i) out += ", ";
        out += "\"" + detail::json_escape(r.details[i].first) + "\": " + fmt17(r.details[i].second);
    }
    out += "},\n";
    out += "  \"warnings\": " + detail::json_string_array(r.warnings);
    if (emit_replicates) out += ",\n  \"replicates\": " + detail::json_number_array(r.replicates);
    out += "\n}\n";
    return out;
}

inline std::string to_csv(const ExperimentResult& r) {
    std::string out = "param,rate,ci_low,ci_high,reps\n";
    for (std::size_t g = 0; g < r.param_grid.size(); ++g) {
        const double lo = std::max(0.0, r.rates[g] - r.ci_half_width[g]);
        const double hi = std::min(1.0, r.rates[g] + r.ci_half_width[g]);
        out += fmt17(r.param_grid[g]) + "," + fmt17(r.rates[g]) + "," + fmt17(lo) + "," +
               fmt17(hi) + "," + std::to_string(r.reps) + "\n";
    }
    return out;
}

inline std::string to_json(const ExperimentResult& r) {
    std::string out = "{\n";
    out += "  \"param_grid\": " + detail::json_number_array(r.param_grid) + ",\n";
    out += "  \"rates\": " + detail::json_number_array(r.rates) + ",\n";
    out += "  \"ci_half_width\": " + detail::json_number_array(r.ci_half_width) + ",\n";
    out += "  \"reps\": " + std::to_string(r.reps) + ",\n";
    out += "  \"seed\": " + std::to_string(r.seed) + ",\n";
    out += "  \"config_echo\": \"" + detail::json_escape(r.config_echo) + "\"\n";
    out += "}\n";
    return out;
}

// Assembled output of the spectrum diagnostic: the eigenvalue estimate plus
// Monte-Carlo quantiles of the implied weighted chi-square limit and its KS
// distance back to the bootstrap statistic values.
struct SpectrumRunOutput {
    std::string test;
    std::size_t n = 0;
    SpectrumEstimate estimate;
    KernelEcho kernel;
    std::uint64_t seed = 0;
    std::size_t draws = 0;
    double q50 = 0.0, q90 = 0.0, q95 = 0.0, q99 = 0.0;
    double ks_to_replicates = 0.0;
};

inline std::string to_json(const SpectrumRunOutput& s) {
    std::string out = "{\n";
    out += "  \"test\": \"" + detail::json_escape(s.test) + "\",\n";
    out += "  \"n\": " + std::to_string(s.n) + ",\n";
    out += "  \"B\": " + std::to_string(s.estimate.B) + ",\n";
    out += "  \"eigenvalues\": " + detail::json_number_array(s.estimate.eigenvalues) + ",\n";
    out += "  \"trace\": " + fmt17(s.estimate.trace) + ",\n";
    out += "  \"clamped\": " + std::to_string(s.estimate.clamped) + ",\n";
    out += "  \"kernel\": " + detail::json_kernel(s.kernel) + ",\n";
    out += "  \"seed\": " + std::to_string(s.seed) + ",\n";
    out += "  \"draws\": " + std::to_string(s.draws) + ",\n";
    out += "  \"quantiles\": {\"q50\": " + fmt17(s.q50) + ", \"q90\": " + fmt17(s.q90) +
           ", \"q95\": " + fmt17(s.q95) + ", \"q99\": " + fmt17(s.q99) + "},\n";
    out += "  \"ks_to_replicates\": " + fmt17(s.ks_to_replicates) + "\n";
    out += "}\n";
    return out;
}

// ---- CSV ingestion ----------------------------------------------------

namespace detail {

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

[[noreturn]] inline void csv_fail(const std::string& path, std::size_t lineno,
                                  const std::string& msg) {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + msg);
}

inline double parse_number(const std::string& tok, const std::string& path, std::size_t lineno,
                           const char* what) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || tok.empty())
        csv_fail(path, lineno, std::string("cannot parse ") + what + " value '" + tok + "'");
    return v;
}

inline int parse_binary(const std::string& tok, const std::string& path, std::size_t lineno,
                        const char* what) {
    const double v = parse_number(tok, path, lineno, what);
    if (v != 0.0 && v != 1.0)
        csv_fail(path, lineno, std::string(what) + " must be 0 or 1, got '" + tok + "'");
    return v == 1.0 ? 1 : 0;
}

inline void expect_header(const std::vector<std::string>& lines, const std::string& path,
                          const std::string& expected) {
    if (lines.empty()) csv_fail(path, 1, "empty file, expected header '" + expected + "'");
    if (lines[0] != expected)
        csv_fail(path, 1, "expected header '" + expected + "', got '" + lines[0] + "'");
}

}  // namespace detail

// Schema: value,group with group in {0,1}. Line numbers in errors are
// 1-based and count the header.
inline TwoSample read_two_sample_csv(const std::string& path) {
    const auto lines = detail::read_lines(path);
    detail::expect_header(lines, path, "value,group");
    std::vector<double> x, y;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto tok = detail::split_csv(lines[i]);
        if (tok.size() != 2) detail::csv_fail(path, i + 1, "expected 2 columns");
        const double v = detail::parse_number(tok[0], path, i + 1, "value");
        (detail::parse_binary(tok[1], path, i + 1, "group") == 0 ? x : y).push_back(v);
    }
    if (x.empty() || y.empty())
        throw std::runtime_error(path + ": both groups must be non-empty");
    TwoSample s;
    s.x = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
    s.y = Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
    return s;
}

// Schema: time,event,group with event, group in {0,1}.
inline CensoredSample read_censored_csv(const std::string& path) {
    const auto lines = detail::read_lines(path);
    detail::expect_header(lines, path, "time,event,group");
    CensoredSample s;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto tok = detail::split_csv(lines[i]);
        if (tok.size() != 3) detail::csv_fail(path, i + 1, "expected 3 columns");
        CensoredObs o;
        o.time = detail::parse_number(tok[0], path, i + 1, "time");
        o.event = detail::parse_binary(tok[1], path, i + 1, "event") == 1;
        o.group = detail::parse_binary(tok[2], path, i + 1, "group");
        s.obs.push_back(o);
    }
    if (group_count(s, 0) == 0 || group_count(s, 1) == 0)
        throw std::runtime_error(path + ": both groups must be non-empty");
    return s;
}

// Schema: x,y,z1,...,zd with d inferred from the header.
inline CondSample read_cond_csv(const std::string& path) {
    const auto lines = detail::read_lines(path);
    if (lines.empty()) detail::csv_fail(path, 1, "empty file, expected header 'x,y,z1,...'");
    const auto head = detail::split_csv(lines[0]);
    if (head.size() < 3 || head[0] != "x" || head[1] != "y")
        detail::csv_fail(path, 1, "expected header 'x,y,z1,...,zd', got '" + lines[0] + "'");
    for (std::size_t j = 2; j < head.size(); ++j)
        if (head[j] != "z" + std::to_string(j - 1))
            detail::csv_fail(path, 1, "expected column 'z" + std::to_string(j - 1) + "', got '" +
                                          head[j] + "'");
    const std::size_t d = head.size() - 2;
    std::vector<double> xs, ys, zs;
    std::size_t n = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto tok = detail::split_csv(lines[i]);
        if (tok.size() != d + 2)
            detail::csv_fail(path, i + 1,
                             "expected " + std::to_string(d + 2) + " columns, got " +
                                 std::to_string(tok.size()));
        xs.push_back(detail::parse_number(tok[0], path, i + 1, "x"));
        ys.push_back(detail::parse_number(tok[1], path, i + 1, "y"));
        for (std::size_t j = 0; j < d; ++j)
            zs.push_back(detail::parse_number(tok[2 + j], path, i + 1, "z"));
        ++n;
    }
    if (n == 0) throw std::runtime_error(path + ": no data rows");
    CondSample s;
    s.x = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(n));
    s.y = Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(n));
    s.z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            s.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = zs[i * d + j];
    return s;
}

// ---- CSV emission (round-trips through the readers above) --------------

inline std::string to_csv(const TwoSample& s) {
    std::string out = "value,group\n";
    for (Eigen::Index i = 0; i < s.x.rows(); ++i) out += fmt17(s.x(i, 0)) + ",0\n";
    for (Eigen::Index i = 0; i < s.y.rows(); ++i) out += fmt17(s.y(i, 0)) + ",1\n";
    return out;
}

inline std::string to_csv(const CensoredSample& s) {
    std::string out = "time,event,group\n";
    for (const auto& o : s.obs)
        out += fmt17(o.time) + "," + (o.event ? "1" : "0") + "," + std::to_string(o.group) + "\n";
    return out;
}

inline std::string to_csv(const CondSample& s) {
    std::string out = "x,y";
    for (Eigen::Index j = 0; j < s.z.cols(); ++j) out += ",z" + std::to_string(j + 1);
    out += "\n";
    for (Eigen::Index i = 0; i < s.x.size(); ++i) {
        out += fmt17(s.x(i)) + "," + fmt17(s.y(i));
        for (Eigen::Index j = 0; j < s.z.cols(); ++j) out += "," + fmt17(s.z(i, j));
        out += "\n";
    }
    return out;
}

// Write to a file, or to stdout when path is "-".
inline void write_text(const std::string& content, const std::string& path) {
    if (path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << content;
    if (!out) throw std::runtime_error(path + ": write failed");
}

inline void write_report(const TestReport& r, const std::string& path,
                         bool emit_replicates = false) {
    write_text(to_json(r, emit_replicates), path);
}

inline void write_report(const ExperimentResult& r, const std::string& path) {
    write_text(to_csv(r), path);
}

inline void write_report(const SpectrumRunOutput& s, const std::string& path) {
    write_text(to_json(s), path);
}

}  // namespace kbt
