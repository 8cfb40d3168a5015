#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rem/autodiff/tensor.hpp"

namespace rem::data {

struct ImageGeometry {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;

  std::size_t values() const noexcept { return channels * height * width; }
  bool operator==(const ImageGeometry&) const = default;
};

// Labeled images, CHW row-major, values in [0, 1].
struct ImageSet {
  ImageGeometry geometry;
  std::size_t num_classes = 0;
  std::vector<double> pixels;
  std::vector<int> labels;
  std::vector<double> channel_mean;  // mask fill value, one per channel

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> image(std::size_t index) const;
  std::span<double> image(std::size_t index);

  // [n, C, H, W] tensor of the selected images (no gradient).
  ad::Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
};

std::vector<double> compute_channel_mean(const ImageGeometry& geometry,
                                         std::span<const double> pixels);

}  // namespace rem::data
