#include "rem/mask/mask_chain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "rem/common/error.hpp"

namespace rem::mask {

void SaliencyScore::validate() const {
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ContractError("saliency: entries must be finite and non-negative");
    }
  }
}

void MaskChainConfig::validate() const {
  if (ratios.empty() || ratios.front() != 0.0) {
    throw ConfigError("mask chain: first ratio must be exactly 0");
  }
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] >= 0.0 && ratios[i] <= 1.0)) {
      throw ConfigError("mask chain: ratios must lie in [0, 1]");
    }
    if (i > 0 && ratios[i] < ratios[i - 1]) {
      throw ConfigError("mask chain: ratios must be non-decreasing");
    }
  }
}

std::size_t masked_count(double ratio, std::size_t patches) {
  const double n = std::floor(ratio * static_cast<double>(patches) + 1e-9);
  return std::min(patches, static_cast<std::size_t>(std::max(0.0, n)));
}

MaskChain build_chain(const SaliencyScore& score, const MaskChainConfig& config) {
  config.validate();
  score.validate();
  const std::size_t p = score.size();
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return score.values[a] > score.values[b];
  });
  MaskChain chain;
  chain.ratios = config.ratios;
  for (double r : config.ratios) {
    const auto n = masked_count(r, p);
    chain.index_sets.emplace_back(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return chain;
}

std::vector<double> fill_values(const MaskChainConfig& config,
                                std::span<const double> channel_mean, std::size_t channels) {
  if (config.fill == FillPolicy::zero) return std::vector<double>(channels, 0.0);
  if (channel_mean.size() != channels) {
    throw ContractError("mask: channel mean has wrong length");
  }
  return {channel_mean.begin(), channel_mean.end()};
}

std::vector<double> apply_mask(std::span<const double> image, const PatchGrid& grid,
                               std::span<const std::size_t> patch_set,
                               std::span<const double> fill) {
  const auto& g = grid.geometry;
  if (image.size() != g.values()) throw ContractError("mask: image size mismatch");
  if (fill.size() != g.channels) throw ContractError("mask: fill has wrong channel count");
  std::vector<double> out(image.begin(), image.end());
  const std::size_t cols = grid.columns();
  const std::size_t plane = g.height * g.width;
  for (auto idx : patch_set) {
    if (idx >= grid.patches()) {
      throw ContractError("mask: patch index " + std::to_string(idx) + " out of range (" +
                          std::to_string(grid.patches()) + " patches)");
    }
    const std::size_t y0 = (idx / cols) * grid.patch_size;
    const std::size_t x0 = (idx % cols) * grid.patch_size;
    for (std::size_t c = 0; c < g.channels; ++c) {
      for (std::size_t y = y0; y < y0 + grid.patch_size; ++y) {
        double* row = out.data() + c * plane + y * g.width + x0;
        std::fill(row, row + grid.patch_size, fill[c]);
      }
    }
  }
  return out;
}

ad::Tensor apply_mask(const ad::Tensor& images, const PatchGrid& grid,
                      const std::vector<std::vector<std::size_t>>& patch_sets,
                      std::span<const double> fill) {
  const std::size_t batch = images.dim(0);
  if (patch_sets.size() != batch) throw ContractError("mask: one patch set per sample");
  const std::size_t n = grid.geometry.values();
  if (images.numel() != batch * n) throw DimensionError("mask: image tensor geometry mismatch");
  std::vector<double> out(images.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    auto masked = apply_mask(images.data().subspan(b * n, n), grid, patch_sets[b], fill);
    std::copy(masked.begin(), masked.end(), out.begin() + static_cast<std::ptrdiff_t>(b * n));
  }
  return ad::Tensor(images.shape(), std::move(out));
}

SaliencyScore score_feature_activation(std::span<const double> token_features,
                                       std::size_t patches, std::size_t width) {
  if (token_features.size() != patches * width) {
    throw DimensionError("feature saliency: expected " + std::to_string(patches) + "x" +
                         std::to_string(width) + " features");
  }
  SaliencyScore s;
  s.provenance = Provenance::feature_activation;
  s.values.resize(patches);
  for (std::size_t p = 0; p < patches; ++p) {
    double ss = 0.0;
    for (std::size_t j = 0; j < width; ++j) ss += token_features[p * width + j] * token_features[p * width + j];
    s.values[p] = std::sqrt(ss);
  }
  return s;
}

void write_chain_grid_ppm(const std::filesystem::path& path,
                          const std::vector<std::vector<std::vector<double>>>& images,
                          const data::ImageGeometry& g) {
  if (images.empty() || images.front().empty()) throw ContractError("ppm: nothing to write");
  const std::size_t rows = images.size();
  const std::size_t cols = images.front().size();
  constexpr std::size_t gap = 2;
  const std::size_t width = cols * g.width + (cols - 1) * gap;
  const std::size_t height = rows * g.height + (rows - 1) * gap;
  std::vector<unsigned char> rgb(width * height * 3, 255);
  const std::size_t plane = g.height * g.width;
  for (std::size_t r = 0; r < rows; ++r) {
    if (images[r].size() != cols) throw ContractError("ppm: ragged grid");
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& img = images[r][c];
      if (img.size() != g.values()) throw ContractError("ppm: image size mismatch");
      for (std::size_t y = 0; y < g.height; ++y) {
        for (std::size_t x = 0; x < g.width; ++x) {
          const std::size_t oy = r * (g.height + gap) + y;
          const std::size_t ox = c * (g.width + gap) + x;
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const std::size_t src = g.channels == 1 ? 0 : ch;
            const double v = std::clamp(img[src * plane + y * g.width + x], 0.0, 1.0);
            rgb[(oy * width + ox) * 3 + ch] = static_cast<unsigned char>(std::lround(v * 255.0));
          }
        }
      }
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("ppm: cannot open " + path.string());
  os << "P6\n" << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

}  // namespace rem::mask
