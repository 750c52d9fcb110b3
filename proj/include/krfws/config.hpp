#pragma once

#include <map>
#include <string>
#include <vector>

#include "krfws/common.hpp"

namespace krfws {

// Flat "key = value" text files: CLI configs, bundle manifests, stage
// configs. Lines starting with '#' are comments. Keys are written sorted so
// identical contents serialize byte-identically.

class KeyValues {
public:
    KeyValues() = default;

    static KeyValues load(const std::string& path);
    /// Parses in-memory text (used by tests and defaults).
    static KeyValues parse(const std::string& text);
    void save(const std::string& path) const;

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;

    void set_string(const std::string& key, const std::string& value);
    void set_double(const std::string& key, double value);
    void set_int(const std::string& key, int value);
    void set_u64(const std::string& key, std::uint64_t value);
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    void set_bool(const std::string& key, bool value);
    void set_int_list(const std::string& key, const std::vector<int>& value);

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace krfws
