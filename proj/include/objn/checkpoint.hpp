#pragma once

#include <string>

#include "objn/model.hpp"

namespace objn {

// Checkpoint file, little-endian:
//   magic "OBJN" | u32 format version | u8 head kind (0=classification,
//   1=bbox) | u32 config json length + bytes | u32 tensor count | per tensor:
//   u16 name length + name, u8 rank, u32 dims..., raw f32 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace objn
