// Self-describing binary checkpoints.
//
// Byte layout (all integers little-endian):
//   [0,8)    magic "EBMGEOCK"
//   [8,12)   uint32 format version (currently 1)
//   [12,20)  uint64 header length in bytes
//   [20,..)  UTF-8 JSON header: {descriptor, seed, metadata,
//            arrays: [{name, rows, cols}, ...]}
//   then     array payloads in header order, row-major float64
//
// The named-array table makes files portable to other implementations
// without sharing struct layouts.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ebmgeo/nets.hpp"
#include "ebmgeo/tensor.hpp"

namespace ebmgeo::ckpt {

// Any malformed/unreadable checkpoint file. The CLI reports these as
// artifact errors (exit 3).
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    std::string descriptor;
    std::uint64_t seed = 0;
    nlohmann::json metadata;  // training steps, loss tail, free-form extras
    std::vector<std::pair<std::string, ad::Matrix>> arrays;

    const ad::Matrix* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Model-level helpers: serialize named parameters plus the architecture
// descriptor, and verify both on the way back in.
void save_energy_model(nets::EnergyModel& model, const std::string& path,
                       std::uint64_t seed, const nlohmann::json& metadata);
nets::EnergyModel load_energy_model(const std::string& path);

void save_interpolant(nets::InterpolantNet& net, const std::string& path,
                      std::uint64_t seed, const nlohmann::json& metadata);
nets::InterpolantNet load_interpolant(const std::string& path);

nlohmann::json checkpoint_metadata(const std::string& path);  // header only

}  // namespace ebmgeo::ckpt
