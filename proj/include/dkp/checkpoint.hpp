#pragma once

#include <string>

#include "dkp/fsp_net.hpp"

namespace dkp {

/// Binary checkpoint: the magic string "DKPOSE1", the normalization stats
/// (mean xyz then scale xyz as 64-bit floats), a tensor count, then per
/// tensor: name (u32 length + bytes), shape (u32 ndim + u32 dims), and
/// row-major 64-bit float data. Little-endian throughout.
inline constexpr const char* kCheckpointMagic = "DKPOSE1";

void save_checkpoint(const Model& model, const std::string& path);

/// Loads and validates a checkpoint against the expected model layout.
/// Bad magic raises a version error; any tensor name/shape difference raises
/// an error naming the expected and found layouts.
Model load_checkpoint(const std::string& path);

}  // namespace dkp
