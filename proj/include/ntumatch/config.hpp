#ifndef NTUMATCH_CONFIG_HPP
#define NTUMATCH_CONFIG_HPP

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ntumatch/csv.hpp"
#include "ntumatch/errors.hpp"

namespace ntumatch {

/// Flat INI-style run configuration: [section] blocks of key=value lines,
/// '#' or ';' comments. Unknown sections or keys are rejected so typos fail
/// loudly; every run writes the resolved config next to its outputs.
class RunConfig {
  public:
    RunConfig() = default;

    static RunConfig parse(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open config " + path);
        RunConfig cfg;
        std::string line, section;
        std::size_t lineNo = 0;
        while (std::getline(in, line)) {
            ++lineNo;
            const auto where = path + ":" + std::to_string(lineNo);
            std::string s = trim(line);
            if (s.empty() || s[0] == '#' || s[0] == ';') continue;
            if (s.front() == '[') {
                if (s.back() != ']') throw SchemaError(where + ": malformed section header");
                section = trim(s.substr(1, s.size() - 2));
                cfg.sections_[section];
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw SchemaError(where + ": expected key=value");
            if (section.empty()) throw SchemaError(where + ": key outside any section");
            const std::string key = trim(s.substr(0, eq));
            const std::string val = trim(s.substr(eq + 1));
            if (!cfg.sections_[section].emplace(key, val).second)
                throw SchemaError(where + ": duplicate key '" + key + "'");
        }
        return cfg;
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        sections_[section][key] = value;
    }

    bool has(const std::string& section, const std::string& key) const {
        auto it = sections_.find(section);
        return it != sections_.end() && it->second.count(key);
    }

    std::string get(const std::string& section, const std::string& key, const std::string& fallback) const {
        auto it = sections_.find(section);
        if (it == sections_.end()) return fallback;
        auto kt = it->second.find(key);
        return kt == it->second.end() ? fallback : kt->second;
    }

    double getDouble(const std::string& section, const std::string& key, double fallback) const {
        if (!has(section, key)) return fallback;
        return csv::parseDouble(get(section, key, ""), section + "." + key);
    }

    long getLong(const std::string& section, const std::string& key, long fallback) const {
        if (!has(section, key)) return fallback;
        return csv::parseLong(get(section, key, ""), section + "." + key);
    }

    bool getBool(const std::string& section, const std::string& key, bool fallback) const {
        if (!has(section, key)) return fallback;
        const std::string v = get(section, key, "");
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw SchemaError(section + "." + key + ": not a boolean: '" + v + "'");
    }

    std::vector<double> getDoubleList(const std::string& section, const std::string& key,
                                      std::vector<double> fallback) const {
        if (!has(section, key)) return fallback;
        std::vector<double> out;
        for (const auto& cell : csv::splitLine(get(section, key, "")))
            if (!trim(cell).empty()) out.push_back(csv::parseDouble(trim(cell), section + "." + key));
        return out;
    }

    std::vector<std::string> getStringList(const std::string& section, const std::string& key) const {
        std::vector<std::string> out;
        for (const auto& cell : csv::splitLine(get(section, key, "")))
            if (!trim(cell).empty()) out.push_back(trim(cell));
        return out;
    }

    /// Reject anything not in the allowed map (section -> keys).
    void validateKeys(const std::map<std::string, std::set<std::string>>& allowed) const {
        for (const auto& [section, kv] : sections_) {
            auto it = allowed.find(section);
            if (it == allowed.end()) throw SchemaError("unknown config section [" + section + "]");
            for (const auto& [key, _] : kv)
                if (!it->second.count(key))
                    throw SchemaError("unknown key '" + key + "' in section [" + section + "]");
        }
    }

    void write(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot write " + path);
        for (const auto& [section, kv] : sections_) {
            out << '[' << section << "]\n";
            for (const auto& [key, value] : kv) out << key << '=' << value << '\n';
            out << '\n';
        }
    }

    const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }

  private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t");
        std::size_t b = s.find_last_not_of(" \t");
        return a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }

    std::map<std::string, std::map<std::string, std::string>> sections_;
};

} // namespace ntumatch

#endif
