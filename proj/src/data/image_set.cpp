#include "rem/data/image_set.hpp"

#include <algorithm>

#include "rem/common/error.hpp"

namespace rem::data {

std::span<const double> ImageSet::image(std::size_t index) const {
  const auto n = geometry.values();
  return std::span<const double>(pixels).subspan(index * n, n);
}

std::span<double> ImageSet::image(std::size_t index) {
  const auto n = geometry.values();
  return std::span<double>(pixels).subspan(index * n, n);
}

ad::Tensor ImageSet::batch(std::span<const std::size_t> indices) const {
  const auto n = geometry.values();
  std::vector<double> out(indices.size() * n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ContractError("image set: index out of range");
    auto src = image(indices[i]);
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return ad::Tensor({indices.size(), geometry.channels, geometry.height, geometry.width},
                    std::move(out));
}

std::vector<int> ImageSet::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

std::vector<double> compute_channel_mean(const ImageGeometry& geometry,
                                         std::span<const double> pixels) {
  std::vector<double> mean(geometry.channels, 0.0);
  const std::size_t plane = geometry.height * geometry.width;
  const std::size_t count = pixels.size() / geometry.values();
  if (count == 0) return mean;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t c = 0; c < geometry.channels; ++c) {
      const double* p = pixels.data() + i * geometry.values() + c * plane;
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      mean[c] += s;
    }
  }
  for (auto& m : mean) m /= static_cast<double>(count * plane);
  return mean;
}

}  // namespace rem::data
