// Run manifests: every artifact a command writes is recorded with its
// content hash, the command that produced it, and the content hashes of
// the artifacts it consumed.  The manifest carries no timestamps, so a
// rerun from the same config and seed reproduces it byte for byte.
#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace ebmgeo::io {

struct ArtifactRecord {
    std::string command;                        // e.g. "ebm train"
    std::string hash;                           // fnv1a-64 of the bytes, hex
    std::map<std::string, std::string> inputs;  // consumed artifact -> its hash
};

struct Manifest {
    std::string tool_version;
    nlohmann::json config;  // raw config snapshot ([section] -> key -> value)
    std::map<std::string, ArtifactRecord> artifacts;  // run-relative path -> record

    // Every recorded input must itself be a recorded artifact, and the
    // references must be acyclic.
    void validate_dag() const;
};

std::string file_hash_hex(const std::string& path);

// dir/manifest.json; a missing file is an empty manifest.
Manifest load_manifest(const std::string& dir);
void save_manifest(const std::string& dir, const Manifest& m);

// Hashes dir/rel and records it as produced by `command` from `inputs`
// (run-relative paths, hashed from their current records).
void record_artifact(Manifest& m, const std::string& dir, const std::string& rel,
                     const std::string& command,
                     const std::vector<std::string>& inputs);

// Existence gate for consumers: returns dir/rel, or throws
// MissingArtifactError naming the command that produces it.
std::string require_artifact(const std::string& dir, const std::string& rel,
                             const std::string& producing_command);

}  // namespace ebmgeo::io
