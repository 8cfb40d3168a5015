#include "rem/vit/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>

#include "rem/adapt/optimizer.hpp"
#include "rem/autodiff/ops.hpp"
#include "rem/common/error.hpp"
#include "rem/common/rng.hpp"
#include "rem/mask/mask_chain.hpp"

namespace rem::vit {

ad::Tensor cross_entropy(const ad::Tensor& logits, const std::vector<int>& labels) {
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  if (labels.size() != batch) throw DimensionError("cross_entropy: label count mismatch");
  std::vector<double> onehot(batch * classes, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
      throw ContractError("cross_entropy: label out of range");
    }
    onehot[b * classes + static_cast<std::size_t>(labels[b])] = 1.0;
  }
  auto logp = ad::log(ad::softmax(logits, 1));
  auto picked = ad::sum(ad::mul(logp, ad::Tensor({batch, classes}, std::move(onehot))));
  return ad::scale(picked, -1.0 / static_cast<double>(batch));
}

std::vector<int> argmax_rows(const ad::Tensor& logits) {
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  std::vector<int> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.data().data() + b * classes;
    out[b] = static_cast<int>(std::max_element(row, row + classes) - row);
  }
  return out;
}

double evaluate_accuracy(const VisionTransformer& model, const data::ImageSet& set,
                         std::size_t batch_size) {
  std::size_t correct = 0;
  std::vector<std::size_t> ids;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    ids.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) ids.push_back(i);
    const auto preds = argmax_rows(model.forward(set.batch(ids)).logits);
    for (std::size_t i = 0; i < ids.size(); ++i) correct += preds[i] == set.labels[ids[i]];
  }
  return set.size() ? static_cast<double>(correct) / static_cast<double>(set.size()) : 0.0;
}

double pretrain_learning_rate(const PretrainOptions& options, double t) {
  const double total = static_cast<double>(options.epochs);
  if (options.warmup_epochs > 0.0 && t < options.warmup_epochs) {
    return options.learning_rate * (t + 1e-3) / options.warmup_epochs;
  }
  if (!options.cosine_decay || total <= options.warmup_epochs) return options.learning_rate;
  const double u = std::clamp((t - options.warmup_epochs) / (total - options.warmup_epochs), 0.0, 1.0);
  return options.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * u));
}

PretrainResult pretrain_source(const ModelConfig& config, const data::ImageSet& train,
                               const data::ImageSet& held_out, const PretrainOptions& options) {
  auto shared = std::shared_ptr<const data::ImageSet>(&train, [](const data::ImageSet*) {});
  return pretrain_source(config, [&](std::size_t) { return shared; }, held_out, options);
}

PretrainResult pretrain_source(const ModelConfig& config, const EpochData& train_for_epoch,
                               const data::ImageSet& held_out, const PretrainOptions& options) {
  config.validate();
  if (options.batch_size == 0) throw ContractError("pretrain: batch size must be positive");
  VisionTransformer model(config);
  model.params().set_requires_grad(true);
  std::vector<ad::Tensor> all;
  for (auto& nt : model.params().named()) all.push_back(nt.tensor);
  adapt::OptimizerSettings settings{adapt::OptimizerKind::adam, options.learning_rate};
  adapt::Optimizer opt(all, settings);

  Rng rng = Rng(options.seed).split("pretrain-shuffle");
  Rng occlusion_rng = Rng(options.seed).split("pretrain-occlusion");
  const mask::PatchGrid grid = config.patch_grid();
  const std::size_t max_occluded = mask::masked_count(options.occlusion_max_ratio, grid.patches());
  std::shared_ptr<const data::ImageSet> train;
  PretrainResult result;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    train = train_for_epoch(epoch);
    if (!train || train->size() == 0) throw ContractError("pretrain: empty training set");
    if (train->num_classes != config.num_classes) {
      throw ContractError("pretrain: dataset class count differs from model");
    }
    std::vector<std::size_t> order(train->size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::span<const std::size_t> ids(order.data() + start, end - start);
      const double t = static_cast<double>(epoch) +
                       static_cast<double>(start) / static_cast<double>(order.size());
      settings.learning_rate = pretrain_learning_rate(options, t);
      opt.set_learning_rate(settings.learning_rate);
      opt.zero_grad();
      ad::Tensor images = train->batch(ids);
      if (options.occlusion_prob > 0.0 && max_occluded > 0) {
        std::vector<std::vector<std::size_t>> sets(ids.size());
        std::vector<std::size_t> all(grid.patches());
        std::optional<AttentionCapture> capture;
        for (std::size_t b = 0; b < sets.size(); ++b) {
          if (occlusion_rng.uniform() >= options.occlusion_prob) continue;
          const auto count = 1 + static_cast<std::ptrdiff_t>(occlusion_rng.below(max_occluded));
          if (options.salient_occlusion_prob > 0.0 &&
              occlusion_rng.uniform() < options.salient_occlusion_prob) {
            if (!capture) capture = model.forward(ad::stop_gradient(images), true).capture;
            auto score = attention_score(*capture, b);
            all = mask::build_chain(score, {{0.0, 1.0}}).index_sets[1];
          } else {
            std::iota(all.begin(), all.end(), std::size_t{0});
            occlusion_rng.shuffle(all.begin(), all.end());
          }
          sets[b].assign(all.begin(), all.begin() + count);
        }
        images = mask::apply_mask(images, grid, sets, train->channel_mean);
      }
      auto loss = cross_entropy(model.forward(images).logits, train->batch_labels(ids));
      if (!std::isfinite(loss.item())) {
        throw TrainingError("pretrain: loss diverged in epoch " + std::to_string(epoch),
                            static_cast<int>(epoch));
      }
      ad::backward(loss);
      opt.step();
      total += loss.item() * static_cast<double>(ids.size());
      seen += ids.size();
    }
    result.epoch_loss.push_back(total / static_cast<double>(seen));
  }
  model.params().set_requires_grad(false);
  opt.zero_grad();
  result.train_accuracy = train ? evaluate_accuracy(model, *train) : 0.0;
  result.clean_accuracy = held_out.size() ? evaluate_accuracy(model, held_out) : 0.0;
  result.params = std::move(model.params());
  return result;
}

}  // namespace rem::vit
