#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "rem/data/image_set.hpp"
#include "rem/vit/model.hpp"

namespace rem::vit {

struct PretrainOptions {
  std::size_t epochs = 20;
  double learning_rate = 2e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;  // shuffling
  // Linear warmup over this many epochs, then cosine decay to zero.
  double warmup_epochs = 1.0;
  bool cosine_decay = true;
  // Random-patch occlusion: with this probability a training image gets
  // between 1 and floor(max_ratio * P) random patches filled with the
  // dataset mean.
  double occlusion_prob = 0.5;
  double occlusion_max_ratio = 0.25;
  // Chance that an occluded image instead loses its most-attended patches
  // (last-block class attention of the current model).
  double salient_occlusion_prob = 0.0;
};

// Learning rate at fractional epoch t.
double pretrain_learning_rate(const PretrainOptions& options, double t);

struct PretrainResult {
  Parameters params;
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;  // fraction, after the last epoch
  double clean_accuracy = 0.0;  // fraction on the held-out clean set
};

// Mean cross-entropy of logits [B, C] against integer labels.
ad::Tensor cross_entropy(const ad::Tensor& logits, const std::vector<int>& labels);

std::vector<int> argmax_rows(const ad::Tensor& logits);

// Accuracy (fraction) of the model over a labeled set, no tape.
double evaluate_accuracy(const VisionTransformer& model, const data::ImageSet& set,
                         std::size_t batch_size = 128);

// Adam on every parameter with cross-entropy. Throws TrainingError (with the
// epoch index) if the loss turns non-finite.
PretrainResult pretrain_source(const ModelConfig& config, const data::ImageSet& train,
                               const data::ImageSet& held_out, const PretrainOptions& options);

// Same, drawing the training set of each epoch from `train_for_epoch`.
using EpochData = std::function<std::shared_ptr<const data::ImageSet>(std::size_t epoch)>;
PretrainResult pretrain_source(const ModelConfig& config, const EpochData& train_for_epoch,
                               const data::ImageSet& held_out, const PretrainOptions& options);

}  // namespace rem::vit
