#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace factmatch {

/// Flat view of a TOML-style key/value file. Keys are stored fully
/// qualified ("penalty.w"); a `[section]` header prefixes every key below it.
/// Supported values: bare numbers and booleans, quoted strings, and
/// single-line arrays of strings or numbers.
class Config {
public:
    Config() = default;

    static Config parse(const std::string& text, const std::string& origin = "<config>");
    static Config load(const std::filesystem::path& path);

    bool contains(const std::string& key) const;
    /// Overrides or inserts a key; `value` uses the same syntax as the file.
    void set(const std::string& key, const std::string& value);

    std::optional<std::string> get_string(const std::string& key) const;
    std::optional<double> get_double(const std::string& key) const;
    std::optional<long long> get_int(const std::string& key) const;
    std::optional<bool> get_bool(const std::string& key) const;
    std::optional<std::vector<std::string>> get_list(const std::string& key) const;

    std::string string_or(const std::string& key, const std::string& fallback) const;
    double double_or(const std::string& key, double fallback) const;
    long long int_or(const std::string& key, long long fallback) const;
    bool bool_or(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& raw() const { return values_; }

private:
    std::map<std::string, std::string> values_;  // raw, unparsed right-hand sides
};

}  // namespace factmatch
