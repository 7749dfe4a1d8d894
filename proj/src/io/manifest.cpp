#include "ebmgeo/io/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ebmgeo/common.hpp"
#include "ebmgeo/rng.hpp"

namespace ebmgeo::io {

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot read '" + path + "' for hashing");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(rng::fnv1a(bytes)));
    return hex;
}

void Manifest::validate_dag() const {
    // Kahn-style peeling: repeatedly settle records whose inputs are all
    // settled.  Anything left over is dangling or cyclic.
    std::set<std::string> settled;
    bool progress = true;
    while (progress) {
        progress = false;
        for (const auto& [path, rec] : artifacts) {
            if (settled.count(path)) continue;
            bool ready = true;
            for (const auto& [in, hash] : rec.inputs) {
                (void)hash;
                if (artifacts.count(in) == 0)
                    throw ConfigError("manifest: artifact '" + path +
                                      "' lists input '" + in +
                                      "' which is not a recorded artifact");
                if (settled.count(in) == 0) ready = false;
            }
            if (ready) {
                settled.insert(path);
                progress = true;
            }
        }
    }
    if (settled.size() != artifacts.size())
        throw ConfigError("manifest: artifact dependencies contain a cycle");
}

Manifest load_manifest(const std::string& dir) {
    Manifest m;
    std::ifstream in(dir + "/manifest.json", std::ios::binary);
    if (!in) return m;
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest: cannot parse '" + dir + "/manifest.json': " +
                          e.what());
    }
    m.tool_version = j.value("tool_version", "");
    m.config = j.value("config", nlohmann::json::object());
    // items() must run on an lvalue; on a temporary it dangles.
    const nlohmann::json arts = j.value("artifacts", nlohmann::json::object());
    for (const auto& [path, rec] : arts.items()) {
        ArtifactRecord r;
        r.command = rec.value("command", "");
        r.hash = rec.value("hash", "");
        const nlohmann::json inputs =
            rec.value("inputs", nlohmann::json::object());
        for (const auto& [in_path, in_hash] : inputs.items())
            r.inputs[in_path] = in_hash.get<std::string>();
        m.artifacts[path] = std::move(r);
    }
    return m;
}

void save_manifest(const std::string& dir, const Manifest& m) {
    m.validate_dag();
    nlohmann::json j;
    j["tool_version"] = m.tool_version;
    j["config"] = m.config;
    nlohmann::json arts = nlohmann::json::object();
    for (const auto& [path, rec] : m.artifacts) {
        nlohmann::json r;
        r["command"] = rec.command;
        r["hash"] = rec.hash;
        nlohmann::json inputs = nlohmann::json::object();
        for (const auto& [in_path, in_hash] : rec.inputs) inputs[in_path] = in_hash;
        r["inputs"] = inputs;
        arts[path] = r;
    }
    j["artifacts"] = arts;
    std::ofstream out(dir + "/manifest.json", std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + dir + "/manifest.json'");
    out << j.dump(2) << "\n";
}

void record_artifact(Manifest& m, const std::string& dir, const std::string& rel,
                     const std::string& command,
                     const std::vector<std::string>& inputs) {
    ArtifactRecord rec;
    rec.command = command;
    rec.hash = file_hash_hex(dir + "/" + rel);
    // Inputs are re-hashed at consumption time, so the record reflects the
    // bytes actually read even if an input was edited by hand after its
    // own record was written.  An input present on disk but absent from
    // the manifest (hand-copied, or the manifest was deleted) is adopted
    // as external rather than failing the DAG check.
    for (const std::string& in : inputs) {
        const std::string h = file_hash_hex(dir + "/" + in);
        rec.inputs[in] = h;
        if (m.artifacts.count(in) == 0) m.artifacts[in] = {"(external)", h, {}};
    }
    m.artifacts[rel] = std::move(rec);
}

std::string require_artifact(const std::string& dir, const std::string& rel,
                             const std::string& producing_command) {
    const std::string path = dir + "/" + rel;
    if (!std::filesystem::exists(path))
        throw MissingArtifactError("missing artifact '" + rel + "' under " + dir +
                                   "; produce it with `ebmgeo " +
                                   producing_command + "`");
    return path;
}

}  // namespace ebmgeo::io
