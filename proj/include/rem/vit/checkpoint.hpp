#pragma once

#include <filesystem>

#include "rem/vit/model.hpp"

namespace rem::vit {

// Binary checkpoint, little-endian:
//   char[8] magic "REMVIT\0\0", u32 version (1)
//   u64 image_size, patch_size, channels, embed_dim, num_heads, depth,
//       mlp_dim, num_classes, seed; f64 norm_eps
//   u64 tensor_count, then per tensor in Parameters::named() order:
//     u32 name_length, name bytes, u32 rank, u64 dims[rank], f64 values[]
// Values are stored as raw IEEE-754 doubles, so save/load round-trips bitwise.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const Parameters& params);

struct Checkpoint {
  ModelConfig config;
  Parameters params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rem::vit
