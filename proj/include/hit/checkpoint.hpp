#pragma once

#include <map>
#include <string>
#include <vector>

#include "hit/params.hpp"

namespace hit {

// Single-file checkpoint: a manifest mapping parameter names to shapes and
// float offsets, followed by one flat little-endian float32 payload.
//
// Byte layout (all integers little-endian):
//   magic   8 bytes: "HITCKPT1"
//   u32     number of parameters
//   u64     total payload length in floats
//   per parameter, sorted by name:
//     u32   name length, then that many name bytes
//     u32   ndim, then ndim x u64 dims
//     u64   offset into the payload, in floats
//   payload: total x f32
void save_checkpoint(const std::string& path, const ParamMap& params);

struct CheckpointEntry {
    Shape shape;
    std::vector<float> values;
};

std::map<std::string, CheckpointEntry> read_checkpoint(const std::string& path);

// Strict restore: the checkpoint must carry exactly the registered parameter
// names with matching shapes.
void load_checkpoint(const std::string& path, ParamMap& params);

}  // namespace hit
