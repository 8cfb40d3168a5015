#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "rem/autodiff/tensor.hpp"
#include "rem/data/image_set.hpp"

namespace rem::mask {

enum class Provenance { attention, feature_activation };

// Per-patch saliency, row-major over the patch grid.
struct SaliencyScore {
  std::vector<double> values;
  Provenance provenance = Provenance::attention;

  std::size_t size() const noexcept { return values.size(); }
  // Throws ContractError on negative or non-finite entries.
  void validate() const;
};

enum class FillPolicy { dataset_mean, zero };

struct MaskChainConfig {
  std::vector<double> ratios{0.0, 0.1, 0.2};
  FillPolicy fill = FillPolicy::dataset_mean;

  // First ratio exactly 0, non-decreasing, all within [0, 1].
  void validate() const;
};

// floor(ratio * patches); a 1e-9 slack absorbs products like 0.29 * 100 that
// land just below an integer in binary floating point.
std::size_t masked_count(double ratio, std::size_t patches);

struct MaskChain {
  std::vector<double> ratios;
  // index_sets[i]: patches masked at ratios[i], in descending-saliency order.
  std::vector<std::vector<std::size_t>> index_sets;
};

// Single descending sort (ties to the lower index), then prefix takes, so the
// sets are nested by construction.
MaskChain build_chain(const SaliencyScore& score, const MaskChainConfig& config);

struct PatchGrid {
  data::ImageGeometry geometry;
  std::size_t patch_size = 8;

  std::size_t columns() const { return geometry.width / patch_size; }
  std::size_t rows() const { return geometry.height / patch_size; }
  std::size_t patches() const { return rows() * columns(); }
};

std::vector<double> fill_values(const MaskChainConfig& config,
                                std::span<const double> channel_mean, std::size_t channels);

// Copies image (C x H x W) with every pixel of the listed patches replaced by
// the per-channel fill value.
std::vector<double> apply_mask(std::span<const double> image, const PatchGrid& grid,
                               std::span<const std::size_t> patch_set,
                               std::span<const double> fill);

// Batched form: sample b of images [B, C, H, W] is masked with patch_sets[b].
ad::Tensor apply_mask(const ad::Tensor& images, const PatchGrid& grid,
                      const std::vector<std::vector<std::size_t>>& patch_sets,
                      std::span<const double> fill);

// score_p = || features[p, :] ||_2 for image-token features [P, d].
SaliencyScore score_feature_activation(std::span<const double> token_features,
                                       std::size_t patches, std::size_t width);

// Writes one chain as a binary PPM: columns are chain positions, rows are
// samples. images[r][c] is a C x H x W image (C = 1 or 3).
void write_chain_grid_ppm(const std::filesystem::path& path,
                          const std::vector<std::vector<std::vector<double>>>& images,
                          const data::ImageGeometry& geometry);

}  // namespace rem::mask
