#include "krfws/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace krfws {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(line_no) +
                            ": expected 'key = value', got '" + stripped + "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw DataError("config line " + std::to_string(line_no) + ": empty key");
        kv.values_[key] = value;
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse(buf.str());
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

void KeyValues::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write config file " + path);
    for (const auto& [key, value] : values_) out << key << " = " << value << "\n";
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw DataError("config key '" + key + "': bad number '" + it->second + "'");
    }
}

int KeyValues::get_int(const std::string& key, int fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoi(it->second);
    } catch (...) {
        throw DataError("config key '" + key + "': bad integer '" + it->second + "'");
    }
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (...) {
        throw DataError("config key '" + key + "': bad integer '" + it->second + "'");
    }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw DataError("config key '" + key + "': bad boolean '" + it->second + "'");
}

namespace {

template <typename T, typename Convert>
std::vector<T> parse_list(const std::string& key, const std::string& text, Convert convert) {
    std::vector<T> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(convert(item));
        } catch (...) {
            throw DataError("config key '" + key + "': bad list item '" + item + "'");
        }
    }
    if (out.empty()) throw DataError("config key '" + key + "': empty list");
    return out;
}

}  // namespace

std::vector<int> KeyValues::get_int_list(const std::string& key,
                                         const std::vector<int>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_list<int>(key, it->second, [](const std::string& s) { return std::stoi(s); });
}

std::vector<double> KeyValues::get_double_list(const std::string& key,
                                               const std::vector<double>& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_list<double>(key, it->second, [](const std::string& s) { return std::stod(s); });
}

void KeyValues::set_string(const std::string& key, const std::string& value) {
    values_[key] = value;
}

void KeyValues::set_double(const std::string& key, double value) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", value);
    values_[key] = buf;
}

void KeyValues::set_int(const std::string& key, int value) { values_[key] = std::to_string(value); }

void KeyValues::set_u64(const std::string& key, std::uint64_t value) {
    values_[key] = std::to_string(value);
}

void KeyValues::set_bool(const std::string& key, bool value) {
    values_[key] = value ? "true" : "false";
}

void KeyValues::set_int_list(const std::string& key, const std::vector<int>& value) {
    std::string joined;
    for (std::size_t i = 0; i < value.size(); ++i) {
        if (i) joined += ',';
        joined += std::to_string(value[i]);
    }
    values_[key] = joined;
}

}  // namespace krfws
