#include "rem/data/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "rem/common/error.hpp"

namespace rem::data {
namespace {

void clamp_unit(std::span<double> image) {
  for (auto& v : image) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace

std::string_view kind_name(CorruptionKind kind) noexcept {
  switch (kind) {
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::impulse_noise: return "impulse_noise";
    case CorruptionKind::gaussian_blur: return "gaussian_blur";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::brightness: return "brightness";
    case CorruptionKind::pixelate: return "pixelate";
  }
  return "?";
}

CorruptionKind parse_kind(std::string_view name) {
  for (auto kind : kAllCorruptions) {
    if (kind_name(kind) == name) return kind;
  }
  throw ConfigError("unknown corruption kind '" + std::string(name) + "'");
}

Corruption parse_corruption(std::string_view text) {
  const auto colon = text.find(':');
  Corruption c;
  c.kind = parse_kind(text.substr(0, colon));
  if (colon != std::string_view::npos) {
    const std::string sev(text.substr(colon + 1));
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(sev, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != sev.size() || sev.empty()) {
      throw ConfigError("bad corruption severity in '" + std::string(text) + "'");
    }
    c.severity = value;
  }
  if (c.severity < 1 || c.severity > 5) {
    throw ConfigError("corruption severity must be in 1..5: '" + std::string(text) + "'");
  }
  return c;
}

std::string Corruption::label() const {
  return std::string(kind_name(kind)) + ":" + std::to_string(severity);
}

const std::array<double, 5>& severity_table(CorruptionKind kind) {
  static const std::array<double, 5> noise = {0.03, 0.06, 0.09, 0.13, 0.18};
  static const std::array<double, 5> impulse = {0.01, 0.02, 0.04, 0.06, 0.09};
  static const std::array<double, 5> blur = {0.5, 0.8, 1.1, 1.4, 1.8};
  static const std::array<double, 5> contrast = {0.8, 0.65, 0.5, 0.4, 0.3};
  static const std::array<double, 5> brightness = {0.05, 0.1, 0.15, 0.2, 0.25};
  static const std::array<double, 5> pixel = {1.5, 2.0, 2.5, 3.0, 3.75};
  switch (kind) {
    case CorruptionKind::gaussian_noise: return noise;
    case CorruptionKind::impulse_noise: return impulse;
    case CorruptionKind::gaussian_blur: return blur;
    case CorruptionKind::contrast: return contrast;
    case CorruptionKind::brightness: return brightness;
    case CorruptionKind::pixelate: return pixel;
  }
  throw ConfigError("unknown corruption kind");
}

double severity_parameter(Corruption corruption) {
  if (corruption.severity < 1 || corruption.severity > 5) {
    throw ConfigError("corruption severity must be in 1..5");
  }
  return severity_table(corruption.kind)[static_cast<std::size_t>(corruption.severity - 1)];
}

void add_gaussian_noise(std::span<double> image, double sigma, Rng& rng) {
  for (auto& v : image) v += sigma * rng.normal();
  clamp_unit(image);
}

void add_impulse_noise(std::span<double> image, double fraction, Rng& rng) {
  for (auto& v : image) {
    if (rng.uniform() < fraction) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  }
}

void gaussian_blur(std::span<double> image, const ImageGeometry& g, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (auto& w : kernel) w /= total;

  const auto h = static_cast<int>(g.height);
  const auto w = static_cast<int>(g.width);
  std::vector<double> tmp(g.height * g.width);
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image.data() + c * g.height * g.width;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          s += kernel[static_cast<std::size_t>(k + radius)] * plane[y * w + reflect(x + k, w)];
        }
        tmp[static_cast<std::size_t>(y * w + x)] = s;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          s += kernel[static_cast<std::size_t>(k + radius)] *
               tmp[static_cast<std::size_t>(reflect(y + k, h) * w + x)];
        }
        plane[y * w + x] = s;
      }
    }
  }
  clamp_unit(image);
}

void adjust_contrast(std::span<double> image, const ImageGeometry& g, double factor) {
  if (factor == 1.0) return;
  const std::size_t plane = g.height * g.width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    auto p = image.subspan(c * plane, plane);
    double mean = 0.0;
    for (double v : p) mean += v;
    mean /= static_cast<double>(plane);
    for (auto& v : p) v = (v - mean) * factor + mean;
  }
  clamp_unit(image);
}

void shift_brightness(std::span<double> image, double delta) {
  if (delta == 0.0) return;
  for (auto& v : image) v += delta;
  clamp_unit(image);
}

void pixelate(std::span<double> image, const ImageGeometry& g, double block) {
  if (block <= 1.0) return;
  // Cell k spans [round(k * block), round((k + 1) * block)), so fractional
  // sizes alternate between the neighbouring integers.
  auto edges = [block](std::size_t n) {
    std::vector<std::size_t> e{0};
    for (std::size_t k = 1; e.back() < n; ++k) {
      e.push_back(std::min(n, static_cast<std::size_t>(std::floor(static_cast<double>(k) * block + 0.5))));
    }
    return e;
  };
  const auto ye = edges(g.height);
  const auto xe = edges(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image.data() + c * g.height * g.width;
    for (std::size_t cy = 0; cy + 1 < ye.size(); ++cy) {
      for (std::size_t cx = 0; cx + 1 < xe.size(); ++cx) {
        double s = 0.0;
        for (std::size_t y = ye[cy]; y < ye[cy + 1]; ++y)
          for (std::size_t x = xe[cx]; x < xe[cx + 1]; ++x) s += plane[y * g.width + x];
        s /= static_cast<double>((ye[cy + 1] - ye[cy]) * (xe[cx + 1] - xe[cx]));
        for (std::size_t y = ye[cy]; y < ye[cy + 1]; ++y)
          for (std::size_t x = xe[cx]; x < xe[cx + 1]; ++x) plane[y * g.width + x] = s;
      }
    }
  }
}

void corrupt(std::span<double> image, const ImageGeometry& geometry, Corruption corruption,
             Rng& rng) {
  if (image.size() != geometry.values()) throw ContractError("corrupt: image size mismatch");
  const double p = severity_parameter(corruption);
  switch (corruption.kind) {
    case CorruptionKind::gaussian_noise: add_gaussian_noise(image, p, rng); return;
    case CorruptionKind::impulse_noise: add_impulse_noise(image, p, rng); return;
    case CorruptionKind::gaussian_blur: gaussian_blur(image, geometry, p); return;
    case CorruptionKind::contrast: adjust_contrast(image, geometry, p); return;
    case CorruptionKind::brightness: shift_brightness(image, p); return;
    case CorruptionKind::pixelate: pixelate(image, geometry, p); return;
  }
  throw ConfigError("unknown corruption kind");
}

}  // namespace rem::data
