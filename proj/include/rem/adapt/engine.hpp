#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rem/adapt/optimizer.hpp"
#include "rem/data/stream.hpp"
#include "rem/mask/mask_chain.hpp"
#include "rem/metrics/report.hpp"
#include "rem/vit/model.hpp"

namespace rem::adapt {

enum class Method { source, tent, rem };
enum class ResetPolicy { continual, episodic };
enum class SaliencySource { attention, feature_activation };

std::string_view method_name(Method m) noexcept;
Method parse_method(std::string_view name);
std::string_view reset_name(ResetPolicy r) noexcept;
ResetPolicy parse_reset(std::string_view name);
std::string_view saliency_name(SaliencySource s) noexcept;
SaliencySource parse_saliency(std::string_view name);

struct AdaptConfig {
  Method method = Method::rem;
  OptimizerSettings optimizer;  // adam, lr 1e-3
  double lambda = 1.0;
  double margin = 0.0;
  mask::MaskChainConfig chain;  // {0, 0.1, 0.2}, dataset-mean fill
  SaliencySource saliency = SaliencySource::attention;
  vit::AttentionReadout readout;  // last block
  ResetPolicy reset = ResetPolicy::continual;
  bool asc = false;
  double asc_threshold = 0.4;  // fraction of ln C
  // The last `unseen_domains` domains of a stream are only evaluated with the
  // parameters reached so far (forward transfer).
  std::size_t unseen_domains = 0;
  std::uint64_t seed = 0;

  void validate() const;
  std::string describe() const;  // one-line echo for diagnostics
};

// Freezes every parameter, then flags the layer-norm gamma/beta tensors as
// trainable and returns them in parameter order.
std::vector<ad::Tensor> select_trainable(vit::Parameters& params);

// 1 where entropy <= threshold_fraction * ln(classes), else 0.
std::vector<double> asc_filter(std::span<const double> entropy, double threshold_fraction,
                               std::size_t classes);

struct StepResult {
  std::size_t classes = 0;
  std::vector<int> predictions;  // argmax at ratio 0, before the update
  std::vector<double> probs;     // [B, C] at ratio 0
  std::optional<double> loss, loss_mcl, loss_erl;
  std::vector<double> per_ratio_entropy;  // batch mean per chain position
  std::optional<double> tvd;              // mean TVD(ratio 0, highest ratio)
  std::size_t kept_samples = 0;           // after ASC
  bool updated = false;
  std::uint64_t forward_passes = 0;
  std::uint64_t backward_passes = 0;
};

// Owns the online update of one model. Labels never enter this class.
class Adapter {
 public:
  Adapter(vit::VisionTransformer& model, AdaptConfig config, std::vector<double> channel_mean);

  // Predict on the batch, then update the trainable parameters. Any
  // non-finite value surfaces as AdaptationError with the step index.
  StepResult step(const ad::Tensor& images);
  // Predict only.
  StepResult evaluate(const ad::Tensor& images) const;
  // Restore the source parameters and a fresh optimizer.
  void reset();

  const AdaptConfig& config() const noexcept { return config_; }
  const std::vector<ad::Tensor>& trainable() const noexcept { return trainable_; }
  const Optimizer& optimizer() const noexcept { return optimizer_; }
  std::uint64_t steps() const noexcept { return steps_; }

 private:
  StepResult step_unchecked(const ad::Tensor& images);

  vit::VisionTransformer& model_;
  AdaptConfig config_;
  vit::Parameters source_;
  std::vector<ad::Tensor> trainable_;
  Optimizer optimizer_;
  std::vector<double> fill_;
  std::uint64_t steps_ = 0;
};

StepResult adapt_step(Adapter& adapter, const ad::Tensor& images);

struct StepRecord {
  std::size_t domain = 0;
  std::uint64_t step = 0;  // global batch counter over the run
  const StepResult* result = nullptr;
  double batch_error = 0.0;
  std::vector<std::size_t> histogram;  // argmax counts per class in this batch
};

using StepObserver = std::function<void(const StepRecord&)>;

// Online protocol over every domain of the stream; per-domain metrics come
// from the predictions emitted at step time.
metrics::RunReport run_stream(vit::VisionTransformer& model, const data::DomainStream& stream,
                              const AdaptConfig& config, const StepObserver& observer = {});

struct RatioPoint {
  double ratio = 0.0;
  double mean_entropy = 0.0;
  double error = 0.0;  // percent
};

// Frozen-model probe: every batch of the stream is masked at each ratio, using
// the saliency of its own unmasked forward, and scored against the labels.
std::vector<RatioPoint> masking_curve(const vit::VisionTransformer& model,
                                      const data::DomainStream& stream,
                                      const std::vector<double>& ratios,
                                      const AdaptConfig& config);

// JSONL writer for step records.
class StepLog {
 public:
  static constexpr int kVersion = 1;
  explicit StepLog(std::ostream& out) : out_(out) {}
  void write(const StepRecord& record);

 private:
  std::ostream& out_;
};

}  // namespace rem::adapt
