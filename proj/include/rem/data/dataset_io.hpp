#pragma once

#include <filesystem>

#include "rem/data/image_set.hpp"

namespace rem::data {

// Binary container, little-endian:
//   char[8]  magic "REMDATA\0"
//   u32      version (1)
//   u64      count, channels, height, width, num_classes
//   f64[channels]        per-channel mean
//   i32[count]           labels
//   f64[count*C*H*W]     pixels, CHW per image
void save_dataset(const ImageSet& set, const std::filesystem::path& path);
ImageSet load_dataset(const std::filesystem::path& path);

}  // namespace rem::data
