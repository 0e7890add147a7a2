#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lano/error.hpp"

// Ordered "key = value" text blocks: the one format behind config files,
// dataset manifests and the checkpoint header. '#' starts a comment, blank
// lines are skipped, order is preserved so emitted blocks are canonical.

namespace lano::kv {

using Map = std::vector<std::pair<std::string, std::string>>;

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

inline Map parse(std::string_view text, const std::string& ctx = "config") {
    Map out;
    std::size_t pos = 0;
    int lineno = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                                              : nl - pos);
        ++lineno;
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        const std::size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const std::size_t eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ConfigError(ctx + ": line " + std::to_string(lineno) +
                              " is not 'key = value': '" + trimmed + "'");
        std::string key = trim(std::string_view(trimmed).substr(0, eq));
        std::string val = trim(std::string_view(trimmed).substr(eq + 1));
        if (key.empty())
            throw ConfigError(ctx + ": empty key on line " + std::to_string(lineno));
        out.emplace_back(std::move(key), std::move(val));
    }
    return out;
}

inline std::string format(const Map& m) {
    std::string out;
    for (const auto& [k, v] : m) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

inline std::optional<std::string> get(const Map& m, std::string_view key) {
    for (const auto& [k, v] : m)
        if (k == key) return v;
    return std::nullopt;
}

inline std::string require(const Map& m, std::string_view key, const std::string& ctx) {
    auto v = get(m, key);
    if (!v) throw ConfigError(ctx + ": missing key '" + std::string(key) + "'");
    return *v;
}

inline std::uint64_t as_u64(const std::string& v, const std::string& ctx) {
    try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(ctx + ": expected unsigned integer, got '" + v + "'");
    }
}

inline double as_f64(const std::string& v, const std::string& ctx) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(ctx + ": expected number, got '" + v + "'");
    }
}

inline bool as_bool(const std::string& v, const std::string& ctx) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(ctx + ": expected true/false, got '" + v + "'");
}

/// Round-trippable double formatting.
inline std::string fmt_f64(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string fmt_bool(bool b) { return b ? "true" : "false"; }

}  // namespace lano::kv
