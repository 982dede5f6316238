#pragma once

// Human-readable run configuration: one "key = value" per line, '#' starts a
// comment. Keys are consumed by the modules that understand them; anything
// left unconsumed is reported as an error by the caller.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "viscoreg/common.hpp"

namespace viscoreg {

class Config {
public:
    Config() = default;

    static Config parse(std::istream& is) {
        Config c;
        std::string line;
        for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
            const std::string key = strip(line.substr(0, eq));
            const std::string value = strip(line.substr(eq + 1));
            if (key.empty()) throw ParseError("empty key", lineno);
            if (c.values_.count(key)) throw ParseError("duplicate key '" + key + "'", lineno);
            c.values_[key] = value;
        }
        return c;
    }

    static Config parse_string(const std::string& text) {
        std::istringstream is(text);
        return parse(is);
    }

    static Config load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config " + path);
        return parse(is);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::logic_error&) {
            throw InvalidArgument("config key '" + key + "' expects a real, got '" + it->second + "'");
        }
    }

    long long get_int(const std::string& key, long long fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t used = 0;
            const long long v = std::stoll(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::logic_error&) {
            throw InvalidArgument("config key '" + key + "' expects an integer, got '" + it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const auto& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw InvalidArgument("config key '" + key + "' expects a boolean, got '" + v + "'");
    }

    std::vector<std::string> unused_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!used_.count(k)) out.push_back(k);
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string strip(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

}  // namespace viscoreg
