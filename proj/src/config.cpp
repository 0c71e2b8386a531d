#include "sas/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "sas/csv.hpp"
#include "sas/errors.hpp"

namespace sas::config {

namespace {

bool parse_number(const std::string& s, double& out);

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

bool parse_number(const std::string& s, double& out) {
    const char* begin = s.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin || !std::isfinite(out)) return false;
    for (const char* p = end; *p; ++p)
        if (*p != ' ' && *p != '\t' && *p != '\r') return false;
    return true;
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    Section* current = nullptr;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        if (stripped.front() == '[') {
            if (stripped.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": malformed section header");
            const std::string name = trim(stripped.substr(1, stripped.size() - 2));
            if (name.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
            for (const auto& s : cfg.sections_)
                if (s.name == name)
                    throw ConfigError(origin + ":" + std::to_string(line_no) +
                                      ": duplicate section [" + name + "]");
            cfg.sections_.push_back({name, {}, line_no});
            current = &cfg.sections_.back();
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        if (current == nullptr)
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": key outside of any [section]");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        for (const auto& e : current->entries)
            if (e.key == key)
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" +
                                  key + "' in [" + current->name + "]");
        current->entries.push_back({key, value, line_no});
    }
    return cfg;
}

std::string ConfigFile::serialize() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& section : sections_) {
        if (!first) out << "\n";
        first = false;
        out << "[" << section.name << "]\n";
        for (const auto& entry : section.entries) out << entry.key << " = " << entry.value << "\n";
    }
    return out.str();
}

void ConfigFile::write_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file: " + path);
    out << serialize();
}

bool ConfigFile::has_section(const std::string& section) const {
    for (const auto& s : sections_)
        if (s.name == section) return true;
    return false;
}

const ConfigFile::Entry* ConfigFile::find(const std::string& section,
                                          const std::string& key) const {
    for (const auto& s : sections_)
        if (s.name == section)
            for (const auto& e : s.entries)
                if (e.key == key) return &e;
    return nullptr;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key) const {
    const Entry* e = find(section, key);
    if (e == nullptr)
        throw ConfigError(origin_ + ": missing required key '" + key + "' in [" + section + "]");
    return e->value;
}

std::string ConfigFile::get_string_or(const std::string& section, const std::string& key,
                                      const std::string& fallback) const {
    const Entry* e = find(section, key);
    return e ? e->value : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key) const {
    const std::string v = get_string(section, key);
    double parsed = 0.0;
    if (parse_number(v, parsed)) return parsed;
    throw ConfigError(origin_ + ": key '" + section + "." + key + "' is not a number: '" + v + "'");
}

double ConfigFile::get_double_or(const std::string& section, const std::string& key,
                                 double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

std::int64_t ConfigFile::get_int_or(const std::string& section, const std::string& key,
                                    std::int64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key);
    try {
        std::size_t used = 0;
        const std::int64_t parsed = std::stoll(v, &used);
        if (trim(v.substr(used)).empty()) return parsed;
    } catch (...) {
    }
    throw ConfigError(origin_ + ": key '" + section + "." + key + "' is not an integer: '" + v +
                      "'");
}

std::uint64_t ConfigFile::get_uint_or(const std::string& section, const std::string& key,
                                      std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key);
    try {
        std::size_t used = 0;
        const std::uint64_t parsed = std::stoull(v, &used);
        if (trim(v.substr(used)).empty()) return parsed;
    } catch (...) {
    }
    throw ConfigError(origin_ + ": key '" + section + "." + key +
                      "' is not a non-negative integer: '" + v + "'");
}

bool ConfigFile::get_bool_or(const std::string& section, const std::string& key,
                             bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(origin_ + ": key '" + section + "." + key + "' is not a boolean: '" + v +
                      "'");
}

std::vector<double> ConfigFile::get_double_list_or(const std::string& section,
                                                   const std::string& key,
                                                   const std::vector<double>& fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key);
    std::vector<double> values;
    std::string cur;
    const auto flush = [&]() {
        const std::string item = trim(cur);
        cur.clear();
        if (item.empty()) return;
        double parsed = 0.0;
        if (parse_number(item, parsed)) {
            values.push_back(parsed);
            return;
        }
        throw ConfigError(origin_ + ": key '" + section + "." + key + "' has a bad list item: '" +
                          item + "'");
    };
    for (char ch : v) {
        if (ch == ',')
            flush();
        else
            cur += ch;
    }
    flush();
    if (values.empty())
        throw ConfigError(origin_ + ": key '" + section + "." + key + "' is an empty list");
    return values;
}

void ConfigFile::set(const std::string& section, const std::string& key,
                     const std::string& value) {
    for (auto& s : sections_) {
        if (s.name != section) continue;
        for (auto& e : s.entries) {
            if (e.key == key) {
                e.value = value;
                return;
            }
        }
        s.entries.push_back({key, value, 0});
        return;
    }
    sections_.push_back({section, {{key, value, 0}}, 0});
}

void ConfigFile::set_double(const std::string& section, const std::string& key, double value) {
    set(section, key, csv::format_double(value));
}

void ConfigFile::set_int(const std::string& section, const std::string& key, std::int64_t value) {
    set(section, key, std::to_string(value));
}

void ConfigFile::set_uint(const std::string& section, const std::string& key,
                          std::uint64_t value) {
    set(section, key, std::to_string(value));
}

void ConfigFile::set_bool(const std::string& section, const std::string& key, bool value) {
    set(section, key, value ? "true" : "false");
}

void ConfigFile::set_double_list(const std::string& section, const std::string& key,
                                 const std::vector<double>& values) {
    std::string joined;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) joined += ", ";
        joined += csv::format_double(values[i]);
    }
    set(section, key, joined);
}

void ConfigFile::reject_unknown(const std::map<std::string, std::set<std::string>>& schema) const {
    for (const auto& section : sections_) {
        const auto it = schema.find(section.name);
        if (it == schema.end())
            throw ConfigError(origin_ + ":" + std::to_string(section.line) +
                              ": unknown section [" + section.name + "]");
        for (const auto& entry : section.entries)
            if (it->second.count(entry.key) == 0)
                throw ConfigError(origin_ + ":" + std::to_string(entry.line) + ": unknown key '" +
                                  entry.key + "' in [" + section.name + "]");
    }
}

bool ConfigFile::operator==(const ConfigFile& other) const {
    if (sections_.size() != other.sections_.size()) return false;
    for (std::size_t s = 0; s < sections_.size(); ++s) {
        if (sections_[s].name != other.sections_[s].name ||
            sections_[s].entries.size() != other.sections_[s].entries.size())
            return false;
        for (std::size_t e = 0; e < sections_[s].entries.size(); ++e)
            if (sections_[s].entries[e].key != other.sections_[s].entries[e].key ||
                sections_[s].entries[e].value != other.sections_[s].entries[e].value)
                return false;
    }
    return true;
}

}  // namespace sas::config
