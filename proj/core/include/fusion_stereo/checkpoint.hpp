#pragma once

#include <string>
#include <vector>

#include "fusion_stereo/tensor.hpp"

namespace fstereo {

// Binary container: magic line, u64 entry count, then per entry a
// length-prefixed name, u32 rank, i32 extents, f64 payload.  All integers and
// doubles little-endian.  Entry order is preserved exactly, so two files from
// identical states compare equal byte for byte.
inline constexpr const char* kCheckpointMagic = "fusion-stereo-ckpt-v1";

struct CheckpointEntry {
    std::string name;
    Tensor tensor;
};

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

}  // namespace fstereo
