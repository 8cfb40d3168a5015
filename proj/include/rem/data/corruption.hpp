#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>

#include "rem/common/rng.hpp"
#include "rem/data/image_set.hpp"

namespace rem::data {

enum class CorruptionKind { gaussian_noise, impulse_noise, gaussian_blur, contrast, brightness, pixelate };

inline constexpr std::array<CorruptionKind, 6> kAllCorruptions = {
    CorruptionKind::gaussian_noise, CorruptionKind::impulse_noise,
    CorruptionKind::gaussian_blur,  CorruptionKind::contrast,
    CorruptionKind::brightness,     CorruptionKind::pixelate};

struct Corruption {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 5;  // 1..5

  std::string label() const;  // "gaussian_noise:5"
  bool operator==(const Corruption&) const = default;
};

std::string_view kind_name(CorruptionKind kind) noexcept;
// Throws ConfigError on unknown names.
CorruptionKind parse_kind(std::string_view name);
// Parses "kind" or "kind:severity" (severity defaults to 5).
Corruption parse_corruption(std::string_view text);

// Severity tables (index 0 is severity 1). Units:
//   gaussian_noise  noise sigma, fraction of the [0,1] range
//   impulse_noise   fraction of values replaced by 0 or 1
//   gaussian_blur   kernel sigma in pixels
//   contrast        factor applied to deviations from the image mean
//   brightness      additive shift
//   pixelate        block size in pixels (fractional sizes alternate)
const std::array<double, 5>& severity_table(CorruptionKind kind);
double severity_parameter(Corruption corruption);

// Parameterized transforms; each clamps to [0, 1] and preserves shape.
void add_gaussian_noise(std::span<double> image, double sigma, Rng& rng);
void add_impulse_noise(std::span<double> image, double fraction, Rng& rng);
void gaussian_blur(std::span<double> image, const ImageGeometry& geometry, double sigma);
void adjust_contrast(std::span<double> image, const ImageGeometry& geometry, double factor);
void shift_brightness(std::span<double> image, double delta);
void pixelate(std::span<double> image, const ImageGeometry& geometry, double block);

// Applies one corruption in place. Deterministic given rng state.
void corrupt(std::span<double> image, const ImageGeometry& geometry, Corruption corruption,
             Rng& rng);

}  // namespace rem::data
