#include "rem/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rem/common/error.hpp"

namespace rem::data {

std::string_view family_name(ShapeFamily family) noexcept {
  switch (family) {
    case ShapeFamily::disk: return "disk";
    case ShapeFamily::square: return "square";
    case ShapeFamily::triangle: return "triangle";
    case ShapeFamily::cross: return "cross";
    case ShapeFamily::ring: return "ring";
    case ShapeFamily::bar: return "bar";
    case ShapeFamily::ell: return "L";
    case ShapeFamily::x_mark: return "X";
  }
  return "?";
}

void SyntheticDatasetConfig::validate() const {
  if (num_classes < 2 || num_classes > kShapeFamilies) {
    throw ConfigError("dataset: num_classes must be in [2, 8]");
  }
  if (patch_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("dataset: patch_size must divide image_size");
  }
  if (image_size < 16) throw ConfigError("dataset: image_size must be at least 16");
  if (samples_per_class == 0) throw ConfigError("dataset: samples_per_class must be > 0");
  const std::size_t grid = image_size / patch_size;
  if (max_foreground_patches(grid * grid) < min_foreground_patches()) {
    throw ConfigError("dataset: patch grid too coarse for the coverage bounds");
  }
}

std::size_t foreground_patch_count(const std::vector<unsigned char>& foreground,
                                   std::size_t image_size, std::size_t patch_size) {
  const std::size_t grid = image_size / patch_size;
  std::size_t count = 0;
  for (std::size_t py = 0; py < grid; ++py) {
    for (std::size_t px = 0; px < grid; ++px) {
      bool hit = false;
      for (std::size_t y = py * patch_size; y < (py + 1) * patch_size && !hit; ++y) {
        for (std::size_t x = px * patch_size; x < (px + 1) * patch_size; ++x) {
          if (foreground[y * image_size + x]) {
            hit = true;
            break;
          }
        }
      }
      count += hit ? 1 : 0;
    }
  }
  return count;
}

std::size_t min_foreground_patches() noexcept { return 4; }

std::size_t max_foreground_patches(std::size_t total_patches) noexcept {
  return static_cast<std::size_t>(std::floor(0.6 * static_cast<double>(total_patches)));
}

namespace {

// u, v: pixel-center offsets from the object center; s: half extent; t: stroke.
bool inside(ShapeFamily family, double u, double v, double s, double t) {
  const double au = std::abs(u);
  const double av = std::abs(v);
  switch (family) {
    case ShapeFamily::disk:
      return u * u + v * v <= s * s;
    case ShapeFamily::square:
      return au <= 0.8 * s && av <= 0.8 * s;
    case ShapeFamily::triangle:
      return v >= -s && v <= s && au <= 0.5 * (v + s);
    case ShapeFamily::cross:
      return (au <= 0.5 * t && av <= s) || (av <= 0.5 * t && au <= s);
    case ShapeFamily::ring: {
      const double r2 = u * u + v * v;
      return r2 <= s * s && r2 >= (s - t) * (s - t);
    }
    case ShapeFamily::bar:
      return au <= s && av <= 0.5 * t;
    case ShapeFamily::ell:
      return (u >= -s && u <= -s + t && av <= s) || (v >= s - t && v <= s && au <= s);
    case ShapeFamily::x_mark:
      return au <= s && av <= s && (std::abs(u - v) <= 0.75 * t || std::abs(u + v) <= 0.75 * t);
  }
  return false;
}

}  // namespace

RenderedSample render_sample(ShapeFamily family, const SyntheticDatasetConfig& config,
                             Rng& rng) {
  const std::size_t size = config.image_size;
  const double sz = static_cast<double>(size);
  const std::size_t total_patches = (size / config.patch_size) * (size / config.patch_size);
  const double scale = sz / 32.0;

  RenderedSample out;
  out.foreground.assign(size * size, 0);
  for (int attempt = 0;; ++attempt) {
    if (attempt > 1000) throw ContractError("dataset: could not place foreground object");
    const double s = rng.uniform(5.0, 9.0) * scale;
    const double t = std::max(2.0, 0.4 * s);
    const double cx = rng.uniform(s + 1.0, sz - s - 1.0);
    const double cy = rng.uniform(s + 1.0, sz - s - 1.0);
    std::fill(out.foreground.begin(), out.foreground.end(), 0);
    std::size_t pixels = 0;
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double u = static_cast<double>(x) + 0.5 - cx;
        const double v = static_cast<double>(y) + 0.5 - cy;
        if (inside(family, u, v, s, t)) {
          out.foreground[y * size + x] = 1;
          ++pixels;
        }
      }
    }
    const auto covered = foreground_patch_count(out.foreground, size, config.patch_size);
    if (pixels >= 8 && covered >= min_foreground_patches() &&
        covered <= max_foreground_patches(total_patches)) {
      break;
    }
  }

  // Background: gray level plus smooth sinusoidal texture and fine grain.
  const double base = rng.uniform(0.3, 0.5);
  const double amp = config.background_amplitude;
  const double fx = rng.uniform(0.15, 0.45);
  const double fy = rng.uniform(0.15, 0.45);
  const double phase_x = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double phase_y = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<double> tint(3);
  for (auto& c : tint) c = rng.uniform(-0.05, 0.05);
  if (config.context_tint > 0.0) {
    // Zero-sum chroma direction at a class-dependent hue angle.
    const double hue = 2.0 * std::numbers::pi * static_cast<double>(family) /
                       static_cast<double>(kShapeFamilies);
    for (std::size_t c = 0; c < 3; ++c) {
      tint[c] += config.context_tint *
                 std::cos(hue - 2.0 * std::numbers::pi * static_cast<double>(c) / 3.0);
    }
  }

  // Foreground color: mean brightness at least 0.25 away from the background.
  std::vector<double> color(3);
  do {
    for (auto& c : color) c = rng.uniform(0.0, 1.0);
  } while (std::abs((color[0] + color[1] + color[2]) / 3.0 - base) < 0.25);

  const std::size_t plane = size * size;
  out.pixels.resize(3 * plane);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double tex = amp * 0.5 *
                         (std::sin(fx * static_cast<double>(x) + phase_x) +
                          std::sin(fy * static_cast<double>(y) + phase_y));
      const bool fg = out.foreground[y * size + x] != 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double grain = rng.uniform(-0.5, 0.5) * amp * 0.5;
        const double v = fg ? color[c] + grain : base + tint[c] + tex + grain;
        out.pixels[c * plane + y * size + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

ImageSet gen_dataset(const SyntheticDatasetConfig& config) {
  config.validate();
  ImageSet set;
  set.geometry = {3, config.image_size, config.image_size};
  set.num_classes = config.num_classes;
  const std::size_t n = config.samples_per_class * config.num_classes;
  set.pixels.reserve(n * set.geometry.values());
  set.labels.reserve(n);
  const Rng root(config.seed);
  for (std::size_t i = 0; i < config.samples_per_class; ++i) {
    for (std::size_t c = 0; c < config.num_classes; ++c) {
      Rng rng = root.split("sample", i * config.num_classes + c);
      auto sample = render_sample(static_cast<ShapeFamily>(c), config, rng);
      set.pixels.insert(set.pixels.end(), sample.pixels.begin(), sample.pixels.end());
      set.labels.push_back(static_cast<int>(c));
    }
  }
  set.channel_mean = compute_channel_mean(set.geometry, set.pixels);
  return set;
}

}  // namespace rem::data
