// INI-style run configuration: `[section]` headers over `key = value`
// lines, full-line comments with '#' or ';'.  Values stay verbatim
// strings until a typed getter parses them, so schema violations can be
// reported field by field ("[ebm] steps: expected an integer, ...").
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include <json.hpp>

namespace ebmgeo::io {

struct Ini {
    // section -> key -> raw value; std::map keeps serialization stable.
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::string origin = "<memory>";  // file name for error messages

    bool has(const std::string& section, const std::string& key) const;

    // Sections as a JSON object of string-valued objects (the manifest's
    // config snapshot keeps the raw text form, not parsed numbers).
    nlohmann::json to_json() const;

    static Ini parse_text(const std::string& text, const std::string& origin);
    static Ini parse_file(const std::string& path);
};

// Typed, schema-checked access.  Every getter records its key; after a
// schema has been read in full, assert_no_unknown_keys() rejects any
// leftover (misspelled) fields by name.
class ConfigReader {
  public:
    explicit ConfigReader(Ini ini) : ini_(std::move(ini)) {}

    const Ini& ini() const { return ini_; }

    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& dflt);
    long get_int(const std::string& section, const std::string& key, long dflt);
    double get_num(const std::string& section, const std::string& key, double dflt);
    bool get_flag(const std::string& section, const std::string& key, bool dflt);
    std::uint64_t get_seed(const std::string& section, const std::string& key,
                           std::uint64_t dflt);

    void assert_no_unknown_keys() const;

  private:
    // nullptr when the key is absent (caller falls back to the default).
    const std::string* find(const std::string& section, const std::string& key);
    [[noreturn]] void fail(const std::string& section, const std::string& key,
                           const std::string& expected, const std::string& raw) const;

    Ini ini_;
    std::set<std::string> seen_;  // "section.key" pairs already requested
};

}  // namespace ebmgeo::io
