#include "factmatch/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "factmatch/error.hpp"

namespace factmatch {

namespace {

std::string trim(std::string_view s) {
    auto first = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    auto last = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
    return first < last ? std::string(first, last) : std::string();
}

// Strips a trailing `# comment` that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

std::vector<std::string> split_array(const std::string& raw, const std::string& key) {
    std::string body = trim(raw);
    if (body.size() < 2 || body.front() != '[' || body.back() != ']') {
        fail(ErrorKind::InvalidConfig, "key '" + key + "' is not an array");
    }
    body = body.substr(1, body.size() - 2);
    std::vector<std::string> out;
    std::string current;
    bool quoted = false;
    for (char c : body) {
        if (c == '"') quoted = !quoted;
        if (c == ',' && !quoted) {
            out.push_back(unquote(trim(current)));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!trim(current).empty()) out.push_back(unquote(trim(current)));
    return out;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string content = trim(strip_comment(line));
        if (content.empty()) continue;
        if (content.front() == '[') {
            if (content.back() != ']') {
                fail(ErrorKind::InvalidConfig, origin + ":" + std::to_string(lineno) + ": malformed section header");
            }
            section = trim(content.substr(1, content.size() - 2));
            continue;
        }
        auto eq = content.find('=');
        if (eq == std::string::npos) {
            fail(ErrorKind::InvalidConfig, origin + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(content.substr(0, eq));
        std::string value = trim(content.substr(eq + 1));
        if (key.empty()) {
            fail(ErrorKind::InvalidConfig, origin + ":" + std::to_string(lineno) + ": empty key");
        }
        cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

bool Config::contains(const std::string& key) const { return values_.count(key) != 0; }

void Config::set(const std::string& key, const std::string& value) { values_[key] = trim(value); }

std::optional<std::string> Config::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return unquote(it->second);
}

std::optional<double> Config::get_double(const std::string& key) const {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size()) {
        fail(ErrorKind::InvalidConfig, "key '" + key + "' is not a number: " + *s);
    }
    return v;
}

std::optional<long long> Config::get_int(const std::string& key) const {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || ptr != s->data() + s->size()) {
        fail(ErrorKind::InvalidConfig, "key '" + key + "' is not an integer: " + *s);
    }
    return v;
}

std::optional<bool> Config::get_bool(const std::string& key) const {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    if (*s == "true") return true;
    if (*s == "false") return false;
    fail(ErrorKind::InvalidConfig, "key '" + key + "' is not a boolean: " + *s);
}

std::optional<std::vector<std::string>> Config::get_list(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    // A bare comma-separated string is accepted as a convenience for CLI overrides.
    if (!it->second.empty() && it->second.front() != '[') {
        return split_array("[" + it->second + "]", key);
    }
    return split_array(it->second, key);
}

std::string Config::string_or(const std::string& key, const std::string& fallback) const {
    return get_string(key).value_or(fallback);
}
double Config::double_or(const std::string& key, double fallback) const {
    return get_double(key).value_or(fallback);
}
long long Config::int_or(const std::string& key, long long fallback) const {
    return get_int(key).value_or(fallback);
}
bool Config::bool_or(const std::string& key, bool fallback) const { return get_bool(key).value_or(fallback); }

}  // namespace factmatch
