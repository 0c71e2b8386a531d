#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace sas::config {

// Flat sectioned key = value configuration. Section and key order are
// preserved so parse -> serialize -> parse is the identity.
class ConfigFile {
  public:
    struct Entry {
        std::string key;
        std::string value;
        int line = 0;
    };
    struct Section {
        std::string name;
        std::vector<Entry> entries;
        int line = 0;
    };

    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>");

    std::string serialize() const;
    void write_file(const std::string& path) const;

    bool has_section(const std::string& section) const;
    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key) const;
    std::string get_string_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const;
    std::int64_t get_int_or(const std::string& section, const std::string& key,
                            std::int64_t fallback) const;
    std::uint64_t get_uint_or(const std::string& section, const std::string& key,
                              std::uint64_t fallback) const;
    bool get_bool_or(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<double> get_double_list_or(const std::string& section, const std::string& key,
                                           const std::vector<double>& fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    void set_double(const std::string& section, const std::string& key, double value);
    void set_int(const std::string& section, const std::string& key, std::int64_t value);
    void set_uint(const std::string& section, const std::string& key, std::uint64_t value);
    void set_bool(const std::string& section, const std::string& key, bool value);
    void set_double_list(const std::string& section, const std::string& key,
                         const std::vector<double>& values);

    // Rejects sections and keys outside the schema, reporting file:line.
    void reject_unknown(const std::map<std::string, std::set<std::string>>& schema) const;

    bool operator==(const ConfigFile& other) const;

    const std::vector<Section>& sections() const { return sections_; }

  private:
    const Entry* find(const std::string& section, const std::string& key) const;

    std::string origin_ = "<empty>";
    std::vector<Section> sections_;
};

}  // namespace sas::config
