#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rem/autodiff/tensor.hpp"
#include "rem/mask/mask_chain.hpp"

namespace rem::vit {

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t embed_dim = 64;
  std::size_t num_heads = 4;
  std::size_t depth = 4;
  std::size_t mlp_dim = 128;
  std::size_t num_classes = 8;
  double norm_eps = 1e-6;
  std::uint64_t seed = 1;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t head_dim() const { return embed_dim / num_heads; }
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }
  mask::PatchGrid patch_grid() const {
    return {{channels, image_size, image_size}, patch_size};
  }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct BlockParameters {
  ad::Tensor norm1_gamma, norm1_beta;
  ad::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  ad::Tensor norm2_gamma, norm2_beta;
  ad::Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

struct Parameters {
  ad::Tensor patch_w, patch_b;  // [patch_dim, d], [d]
  ad::Tensor cls_token;         // [d]
  ad::Tensor pos_embed;         // [tokens, d]
  std::vector<BlockParameters> blocks;
  ad::Tensor norm_gamma, norm_beta;
  ad::Tensor head_w, head_b;    // [d, classes], [classes]

  // Canonical order; handles share storage with this object.
  std::vector<NamedTensor> named() const;
  // Layer-norm gamma/beta pairs only.
  std::vector<NamedTensor> normalization() const;
  // Deep copy with fresh leaves.
  Parameters clone() const;
  // Overwrite values (bitwise) from another parameter set of identical layout.
  void assign_from(const Parameters& other);
  void set_requires_grad(bool flag);
};

bool is_normalization_parameter(const std::string& name);

// Seeded initialization from config.seed.
Parameters init_parameters(const ModelConfig& config);

// Class-token attention of each block, restricted to image keys:
// softmax(q_cls . k_img / sqrt(head_dim)) per head.
struct AttentionCapture {
  std::size_t batch = 0, heads = 0, patches = 0, width = 0;
  std::vector<std::vector<double>> attention;  // [block][B, H, P]
  std::vector<std::vector<double>> features;   // [block][B, P, d], block outputs

  std::span<const double> row(std::size_t block, std::size_t sample, std::size_t head) const;
  std::span<const double> token_features(std::size_t block, std::size_t sample) const;
};

struct ForwardResult {
  ad::Tensor logits;  // [B, classes]
  std::optional<AttentionCapture> capture;
};

// Saliency readout over the capture: one block (negative counts from the end,
// -1 is the last block) or the mean over all blocks.
struct AttentionReadout {
  int block = -1;
  bool mean_over_blocks = false;
};

// A_p = sum over heads of the captured class-token attention to patch p.
mask::SaliencyScore attention_score(const std::optional<AttentionCapture>& capture,
                                    std::size_t sample, AttentionReadout readout = {});
mask::SaliencyScore attention_score(const AttentionCapture& capture, std::size_t sample,
                                    AttentionReadout readout = {});

class VisionTransformer {
 public:
  VisionTransformer(ModelConfig config, Parameters params);
  explicit VisionTransformer(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  const Parameters& params() const noexcept { return params_; }
  Parameters& params() noexcept { return params_; }

  // images: [B, C, H, W]. Gradients reach whichever parameters require them.
  ForwardResult forward(const ad::Tensor& images, bool capture = false) const;

  std::uint64_t forward_passes() const noexcept { return forward_passes_; }

 private:
  ModelConfig config_;
  Parameters params_;
  mutable std::uint64_t forward_passes_ = 0;
};

// Fixed input standardization (x - center) / spread applied while patchifying.
inline constexpr double kPixelCenter = 0.45;
inline constexpr double kPixelSpread = 0.25;

// [B, C, H, W] -> [B, P, C*p*p] of standardized pixels; patch vector ordered
// (channel, row, column).
ad::Tensor patchify(const ad::Tensor& images, const ModelConfig& config);

}  // namespace rem::vit
