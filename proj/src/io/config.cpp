#include "ebmgeo/io/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ebmgeo/common.hpp"

namespace ebmgeo::io {

namespace {

std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::string where(const std::string& origin, int line) {
    return origin + ":" + std::to_string(line) + ": ";
}

}  // namespace

bool Ini::has(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
}

nlohmann::json Ini::to_json() const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [name, kv] : sections) {
        nlohmann::json sec = nlohmann::json::object();
        for (const auto& [k, v] : kv) sec[k] = v;
        out[name] = sec;
    }
    return out;
}

Ini Ini::parse_text(const std::string& text, const std::string& origin) {
    Ini out;
    out.origin = origin;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']' || s.size() < 3)
                throw ConfigError(where(origin, lineno) +
                                  "malformed section header '" + s + "'");
            section = trim(s.substr(1, s.size() - 2));
            out.sections[section];  // an empty section is legal
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where(origin, lineno) +
                              "expected 'key = value', got '" + s + "'");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty())
            throw ConfigError(where(origin, lineno) + "empty key before '='");
        if (section.empty())
            throw ConfigError(where(origin, lineno) + "key '" + key +
                              "' appears before any [section]");
        auto [it, fresh] = out.sections[section].emplace(key, value);
        (void)it;
        if (!fresh)
            throw ConfigError(where(origin, lineno) + "duplicate key '" + key +
                              "' in [" + section + "]");
    }
    return out;
}

Ini Ini::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), path);
}

const std::string* ConfigReader::find(const std::string& section,
                                      const std::string& key) {
    seen_.insert(section + "." + key);
    auto s = ini_.sections.find(section);
    if (s == ini_.sections.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

void ConfigReader::fail(const std::string& section, const std::string& key,
                        const std::string& expected, const std::string& raw) const {
    throw ConfigError(ini_.origin + ": [" + section + "] " + key +
                      ": expected " + expected + ", got '" + raw + "'");
}

std::string ConfigReader::get_str(const std::string& section,
                                  const std::string& key,
                                  const std::string& dflt) {
    const std::string* raw = find(section, key);
    return raw ? *raw : dflt;
}

long ConfigReader::get_int(const std::string& section, const std::string& key,
                           long dflt) {
    const std::string* raw = find(section, key);
    if (!raw) return dflt;
    errno = 0;
    char* end = nullptr;
    long v = std::strtol(raw->c_str(), &end, 10);
    if (errno != 0 || end == raw->c_str() || *end != '\0')
        fail(section, key, "an integer", *raw);
    return v;
}

double ConfigReader::get_num(const std::string& section, const std::string& key,
                             double dflt) {
    const std::string* raw = find(section, key);
    if (!raw) return dflt;
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(raw->c_str(), &end);
    if (errno != 0 || end == raw->c_str() || *end != '\0')
        fail(section, key, "a number", *raw);
    return v;
}

bool ConfigReader::get_flag(const std::string& section, const std::string& key,
                            bool dflt) {
    const std::string* raw = find(section, key);
    if (!raw) return dflt;
    if (*raw == "true" || *raw == "1" || *raw == "on" || *raw == "yes") return true;
    if (*raw == "false" || *raw == "0" || *raw == "off" || *raw == "no") return false;
    fail(section, key, "a boolean (true/false)", *raw);
}

std::uint64_t ConfigReader::get_seed(const std::string& section,
                                     const std::string& key, std::uint64_t dflt) {
    const std::string* raw = find(section, key);
    if (!raw) return dflt;
    errno = 0;
    char* end = nullptr;
    unsigned long long v = std::strtoull(raw->c_str(), &end, 10);
    if (errno != 0 || end == raw->c_str() || *end != '\0' ||
        raw->find('-') != std::string::npos)
        fail(section, key, "a nonnegative integer", *raw);
    return static_cast<std::uint64_t>(v);
}

void ConfigReader::assert_no_unknown_keys() const {
    std::string bad;
    for (const auto& [name, kv] : ini_.sections)
        for (const auto& [k, v] : kv) {
            (void)v;
            if (seen_.count(name + "." + k) == 0) {
                if (!bad.empty()) bad += "; ";
                bad += "[" + name + "] " + k;
            }
        }
    if (!bad.empty())
        throw ConfigError(ini_.origin + ": unknown key(s): " + bad);
}

}  // namespace ebmgeo::io
