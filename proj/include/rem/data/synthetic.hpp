#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "rem/common/rng.hpp"
#include "rem/data/image_set.hpp"

namespace rem::data {

// One foreground family per class; labels map to families in this order.
enum class ShapeFamily { disk, square, triangle, cross, ring, bar, ell, x_mark };
inline constexpr std::size_t kShapeFamilies = 8;

std::string_view family_name(ShapeFamily family) noexcept;

struct SyntheticDatasetConfig {
  std::size_t num_classes = 8;
  std::size_t image_size = 32;
  std::size_t patch_size = 8;  // coverage bounds are stated in patches
  std::size_t samples_per_class = 256;
  double background_amplitude = 0.06;
  // Chroma of a class-specific background tint. Gives the background weak
  // class context, so an image with its object hidden is not pure noise.
  double context_tint = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct RenderedSample {
  std::vector<double> pixels;               // 3 x S x S
  std::vector<unsigned char> foreground;    // S x S, 1 where the object is drawn
};

// Number of patches containing at least one foreground pixel.
std::size_t foreground_patch_count(const std::vector<unsigned char>& foreground,
                                   std::size_t image_size, std::size_t patch_size);

// Coverage bounds every rendered object satisfies.
std::size_t min_foreground_patches() noexcept;
std::size_t max_foreground_patches(std::size_t total_patches) noexcept;

RenderedSample render_sample(ShapeFamily family, const SyntheticDatasetConfig& config,
                             Rng& rng);

// Deterministic given config.seed; class-balanced, ordered by sample then class.
ImageSet gen_dataset(const SyntheticDatasetConfig& config);

}  // namespace rem::data
