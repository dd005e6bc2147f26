#pragma once

// Helpers for the "kind:key=value,key=value" strings used by the CLI and config files.

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "causalcert/errors.hpp"

namespace causalcert::detail {

inline std::string trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

// Parses a finite double; throws ConfigError naming `what` otherwise.
inline double parse_double(std::string_view text, std::string_view what) {
    const std::string s = trim(text);
    if (s.empty()) throw ConfigError("empty value for '" + std::string(what) + "'");
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v))
        throw ConfigError("invalid number '" + s + "' for '" + std::string(what) + "'");
    return v;
}

inline long long parse_int(std::string_view text, std::string_view what) {
    const std::string s = trim(text);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError("invalid integer '" + s + "' for '" + std::string(what) + "'");
    return v;
}

// key=value list separated by commas; keys must be from `allowed`.
class KeyValues {
public:
    KeyValues() = default;

    KeyValues(std::string_view text, std::string_view context, std::set<std::string> allowed)
        : context_(context) {
        if (trim(text).empty()) return;
        for (const auto& item : split(text, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ConfigError("expected key=value in '" + std::string(context) + "', got '" + item + "'");
            auto key = trim(std::string_view(item).substr(0, eq));
            if (!allowed.count(key))
                throw ConfigError("unknown key '" + key + "' in '" + std::string(context) + "'");
            if (values_.count(key))
                throw ConfigError("duplicate key '" + key + "' in '" + std::string(context) + "'");
            values_[key] = trim(std::string_view(item).substr(eq + 1));
        }
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : parse_double(it->second, context_ + "." + key);
    }

    long long get_int(const std::string& key, long long fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : parse_int(it->second, context_ + "." + key);
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

private:
    std::string context_;
    std::map<std::string, std::string> values_;
};

// Splits "kind:rest" at the first colon. A bare "kind" yields an empty rest.
inline std::pair<std::string, std::string> split_kind(std::string_view spec) {
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) return {trim(spec), {}};
    return {trim(spec.substr(0, colon)), trim(spec.substr(colon + 1))};
}

// Shortest text that round-trips a double, for canonical spec strings.
inline std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace causalcert::detail
