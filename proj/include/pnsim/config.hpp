#pragma once

// Flat "key = value" configuration files. '#' starts a comment, blank lines are
// ignored, list values are comma separated. Physical quantities carry their unit
// in the key name (fwhm_ps, rep_period_ns, acq_bin_ms, ...).

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace pnsim {

namespace detail {

inline std::string trim(std::string s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) out.push_back(trim(item));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline double parse_double(const std::string& text, const std::string& what, std::size_t line = 0) {
    const std::string t = trim(text);
    if (t.empty()) throw ParseError("empty number for " + what, line);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw ParseError("cannot parse '" + t + "' as a number for " + what, line);
    return v;
}

inline long long parse_integer(const std::string& text, const std::string& what, std::size_t line = 0) {
    const std::string t = trim(text);
    if (t.empty()) throw ParseError("empty integer for " + what, line);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size() || errno == ERANGE)
        throw ParseError("cannot parse '" + t + "' as an integer for " + what, line);
    return v;
}

}  // namespace detail

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::istream& is) {
        KeyValueConfig cfg;
        std::string raw;
        std::size_t line = 0;
        while (std::getline(is, raw)) {
            ++line;
            if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
            const std::string text = detail::trim(raw);
            if (text.empty()) continue;
            const auto eq = text.find('=');
            if (eq == std::string::npos) throw ParseError("expected 'key = value'", line);
            const std::string key = detail::trim(text.substr(0, eq));
            const std::string value = detail::trim(text.substr(eq + 1));
            if (key.empty()) throw ParseError("empty key", line);
            if (cfg.values_.count(key)) throw ParseError("duplicate key '" + key + "'", line);
            cfg.values_[key] = {value, line};
        }
        return cfg;
    }

    static KeyValueConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open config file " + path);
        try {
            return parse(in);
        } catch (const ParseError& e) {
            throw ParseError(path + ": " + e.what());
        }
    }

    void set(const std::string& key, const std::string& value) { values_[key] = {value, 0}; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::vector<std::string> keys() const {
        std::vector<std::string> k;
        for (const auto& [key, _] : values_) k.push_back(key);
        return k;
    }

    std::optional<std::string> get_string(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second.value;
    }

    std::optional<double> get_double(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return detail::parse_double(it->second.value, key, it->second.line);
    }

    double get_double(const std::string& key, double fallback) const {
        return get_double(key).value_or(fallback);
    }

    std::optional<long long> get_integer(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return detail::parse_integer(it->second.value, key, it->second.line);
    }

    std::optional<std::vector<double>> get_list(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        std::vector<double> out;
        if (it->second.value.empty()) return out;
        for (const auto& item : detail::split(it->second.value, ','))
            out.push_back(detail::parse_double(item, key, it->second.line));
        return out;
    }

    // Rejects keys outside `allowed`, which catches unit typos such as fwhm_ns.
    void require_known(const std::set<std::string>& allowed) const {
        for (const auto& [key, entry] : values_)
            if (!allowed.count(key)) throw ParseError("unknown config key '" + key + "'", entry.line);
    }

private:
    struct Entry {
        std::string value;
        std::size_t line;
    };
    std::map<std::string, Entry> values_;
};

}  // namespace pnsim
