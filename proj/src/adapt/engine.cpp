#include "rem/adapt/engine.hpp"

#include <cmath>
#include <sstream>

#include "rem/autodiff/ops.hpp"
#include "rem/common/error.hpp"
#include "rem/losses/losses.hpp"
#include "rem/vit/pretrain.hpp"

namespace rem::adapt {

std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::source: return "source";
    case Method::tent: return "tent";
    case Method::rem: return "rem";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "source") return Method::source;
  if (name == "tent") return Method::tent;
  if (name == "rem") return Method::rem;
  throw ConfigError("unknown method '" + std::string(name) + "' (source|tent|rem)");
}

std::string_view reset_name(ResetPolicy r) noexcept {
  return r == ResetPolicy::continual ? "continual" : "episodic";
}

ResetPolicy parse_reset(std::string_view name) {
  if (name == "continual") return ResetPolicy::continual;
  if (name == "episodic") return ResetPolicy::episodic;
  throw ConfigError("unknown mode '" + std::string(name) + "' (continual|episodic)");
}

std::string_view saliency_name(SaliencySource s) noexcept {
  return s == SaliencySource::attention ? "attention" : "feature";
}

SaliencySource parse_saliency(std::string_view name) {
  if (name == "attention") return SaliencySource::attention;
  if (name == "feature") return SaliencySource::feature_activation;
  throw ConfigError("unknown saliency '" + std::string(name) + "' (attention|feature)");
}

void AdaptConfig::validate() const {
  if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw ConfigError("learning rate must be finite and >= 0");
  }
  if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
  if (!std::isfinite(lambda)) throw ConfigError("lambda must be finite");
  if (!(asc_threshold >= 0.0 && asc_threshold <= 1.0)) {
    throw ConfigError("asc threshold must lie in [0, 1]");
  }
  chain.validate();
  if (method == Method::rem && chain.ratios.size() < 2) {
    throw ConfigError("rem needs at least one nonzero masking ratio");
  }
}

std::string AdaptConfig::describe() const {
  std::ostringstream os;
  os << "method=" << method_name(method) << " optimizer=" << optimizer_name(optimizer.kind)
     << " lr=" << optimizer.learning_rate << " lambda=" << lambda << " margin=" << margin
     << " ratios=";
  for (std::size_t i = 0; i < chain.ratios.size(); ++i) os << (i ? "," : "") << chain.ratios[i];
  os << " mode=" << reset_name(reset) << " asc=" << (asc ? "on" : "off") << " seed=" << seed;
  return os.str();
}

std::vector<ad::Tensor> select_trainable(vit::Parameters& params) {
  params.set_requires_grad(false);
  std::vector<ad::Tensor> out;
  for (auto& nt : params.normalization()) {
    nt.tensor.set_requires_grad(true);
    out.push_back(nt.tensor);
  }
  return out;
}

std::vector<double> asc_filter(std::span<const double> entropy, double threshold_fraction,
                               std::size_t classes) {
  if (!(threshold_fraction >= 0.0 && threshold_fraction <= 1.0)) {
    throw ContractError("asc_filter: threshold fraction must lie in [0, 1]");
  }
  const double limit = threshold_fraction * std::log(static_cast<double>(classes));
  std::vector<double> w(entropy.size());
  for (std::size_t i = 0; i < entropy.size(); ++i) w[i] = entropy[i] > limit ? 0.0 : 1.0;
  return w;
}

namespace {

std::vector<double> row_mean_tvd(std::span<const double> p, std::span<const double> q,
                                 std::size_t classes) {
  std::vector<double> out(p.size() / classes);
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b] = metrics::tvd(p.subspan(b * classes, classes), q.subspan(b * classes, classes));
  }
  return out;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

mask::SaliencyScore saliency_for(const vit::AttentionCapture& cap, std::size_t sample,
                                 const AdaptConfig& config);

mask::SaliencyScore feature_score(const vit::AttentionCapture& cap, std::size_t sample,
                                  vit::AttentionReadout readout) {
  const auto blocks = static_cast<int>(cap.features.size());
  std::vector<int> use;
  if (readout.mean_over_blocks) {
    for (int b = 0; b < blocks; ++b) use.push_back(b);
  } else {
    const int b = readout.block < 0 ? blocks + readout.block : readout.block;
    if (b < 0 || b >= blocks) throw ContractError("saliency: block index out of range");
    use.push_back(b);
  }
  mask::SaliencyScore score;
  score.provenance = mask::Provenance::feature_activation;
  score.values.assign(cap.patches, 0.0);
  for (int b : use) {
    auto s = mask::score_feature_activation(cap.token_features(static_cast<std::size_t>(b), sample),
                                            cap.patches, cap.width);
    for (std::size_t p = 0; p < cap.patches; ++p) score.values[p] += s.values[p];
  }
  if (use.size() > 1) {
    for (auto& v : score.values) v /= static_cast<double>(use.size());
  }
  return score;
}

mask::SaliencyScore saliency_for(const vit::AttentionCapture& cap, std::size_t sample,
                                 const AdaptConfig& config) {
  return config.saliency == SaliencySource::attention
             ? vit::attention_score(cap, sample, config.readout)
             : feature_score(cap, sample, config.readout);
}

}  // namespace

Adapter::Adapter(vit::VisionTransformer& model, AdaptConfig config,
                 std::vector<double> channel_mean)
    : model_(model),
      config_(std::move(config)),
      source_(model.params().clone()),
      trainable_(),
      optimizer_({}, config_.optimizer) {
  config_.validate();
  if (config_.method == Method::source) {
    model_.params().set_requires_grad(false);
  } else {
    trainable_ = select_trainable(model_.params());
  }
  optimizer_ = Optimizer(trainable_, config_.optimizer);
  fill_ = mask::fill_values(config_.chain, channel_mean, model_.config().channels);
}

void Adapter::reset() {
  model_.params().assign_from(source_);
  optimizer_.reset();
}

StepResult Adapter::evaluate(const ad::Tensor& images) const {
  const std::uint64_t fwd0 = model_.forward_passes();
  StepResult r;
  r.classes = model_.config().num_classes;
  auto out = model_.forward(ad::stop_gradient(images), false);
  r.predictions = vit::argmax_rows(out.logits);
  auto p0 = loss::ProbBatch::from_logits(ad::stop_gradient(out.logits));
  r.probs.assign(p0.probs.data().begin(), p0.probs.data().end());
  r.per_ratio_entropy = {mean_of(loss::entropy_values(p0))};
  r.forward_passes = model_.forward_passes() - fwd0;
  return r;
}

StepResult Adapter::step(const ad::Tensor& images) {
  try {
    return step_unchecked(images);
  } catch (const NumericError& e) {
    throw AdaptationError("non-finite value at step " + std::to_string(steps_) + " (" + e.what() +
                              ") [" + config_.describe() + "]",
                          static_cast<long>(steps_));
  }
}

StepResult Adapter::step_unchecked(const ad::Tensor& images_in) {
  if (config_.method == Method::source) {
    ++steps_;
    return evaluate(images_in);
  }
  const std::uint64_t fwd0 = model_.forward_passes();
  const std::uint64_t bwd0 = ad::backward_calls();
  const ad::Tensor images = ad::stop_gradient(images_in);
  const std::size_t batch = images.dim(0);
  const bool rem = config_.method == Method::rem;

  StepResult r;
  r.classes = model_.config().num_classes;
  auto out = model_.forward(images, rem);
  r.predictions = vit::argmax_rows(out.logits);

  std::vector<loss::ProbBatch> chain;
  chain.push_back(loss::ProbBatch::from_logits(out.logits, 0.0));
  r.probs.assign(chain[0].probs.data().begin(), chain[0].probs.data().end());
  const std::vector<double> s0 = loss::entropy_values(chain[0]);
  r.per_ratio_entropy.push_back(mean_of(s0));

  if (rem) {
    const mask::PatchGrid grid = model_.config().patch_grid();
    std::vector<mask::MaskChain> chains(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      chains[b] = mask::build_chain(saliency_for(*out.capture, b, config_), config_.chain);
    }
    for (std::size_t i = 1; i < config_.chain.ratios.size(); ++i) {
      std::vector<std::vector<std::size_t>> sets(batch);
      for (std::size_t b = 0; b < batch; ++b) sets[b] = chains[b].index_sets[i];
      auto masked = model_.forward(mask::apply_mask(images, grid, sets, fill_), false);
      chain.push_back(loss::ProbBatch::from_logits(masked.logits, config_.chain.ratios[i]));
      r.per_ratio_entropy.push_back(mean_of(loss::entropy_values(chain.back())));
    }
    r.tvd = mean_of(row_mean_tvd(chain.front().probs.data(), chain.back().probs.data(), r.classes));
  }

  std::vector<double> weights;
  if (config_.asc) weights = asc_filter(s0, config_.asc_threshold, r.classes);
  r.kept_samples = batch;
  if (!weights.empty()) {
    r.kept_samples = 0;
    for (double w : weights) r.kept_samples += w > 0.0;
  }

  ad::Tensor objective;
  if (rem) {
    auto l = loss::rem_total(chain, config_.lambda, config_.margin, weights);
    objective = l.total.value;
    r.loss_mcl = l.mcl.item();
    r.loss_erl = l.erl.item();
  } else {
    objective = loss::em_loss(chain[0], weights).value;
  }
  r.loss = objective.item();
  if (!std::isfinite(*r.loss)) {
    throw AdaptationError("non-finite loss at step " + std::to_string(steps_) + " [" +
                              config_.describe() + "]",
                          static_cast<long>(steps_));
  }

  // With every sample filtered out nothing is propagated and the optimizer
  // state is left alone.
  if (r.kept_samples > 0 && objective.requires_grad()) {
    ad::backward(objective);
    optimizer_.step();
    optimizer_.zero_grad();
    r.updated = true;
  }
  ++steps_;
  r.forward_passes = model_.forward_passes() - fwd0;
  r.backward_passes = ad::backward_calls() - bwd0;
  return r;
}

StepResult adapt_step(Adapter& adapter, const ad::Tensor& images) { return adapter.step(images); }

metrics::RunReport run_stream(vit::VisionTransformer& model, const data::DomainStream& stream,
                              const AdaptConfig& config, const StepObserver& observer) {
  const std::size_t domains = stream.num_domains();
  if (config.unseen_domains >= domains && config.unseen_domains > 0) {
    throw ConfigError("unseen_domains must leave at least one adapted domain");
  }
  Adapter adapter(model, config, stream.dataset().channel_mean);
  const std::size_t classes = model.config().num_classes;

  metrics::RunReport report;
  report.method = std::string(method_name(config.method));
  report.mode = std::string(reset_name(config.reset));
  report.seed = config.seed;

  std::uint64_t global_step = 0;
  const std::size_t first_unseen = domains - config.unseen_domains;
  for (std::size_t d = 0; d < domains; ++d) {
    const bool seen = d < first_unseen;
    if (config.reset == ResetPolicy::episodic && d > 0 && seen) adapter.reset();
    metrics::DomainAccumulator acc(classes);
    for (std::size_t i = 0; i < stream.batches_in(d); ++i) {
      const data::StreamBatch sb = stream.batch(d, i);
      const StepResult r = seen ? adapter.step(sb.images) : adapter.evaluate(sb.images);
      acc.add(r.predictions, sb.labels, r.probs, r.tvd);
      if (observer) {
        StepRecord rec;
        rec.domain = d;
        rec.step = global_step;
        rec.result = &r;
        rec.batch_error = metrics::error_rate(r.predictions, sb.labels);
        rec.histogram.assign(classes, 0);
        for (int p : r.predictions) ++rec.histogram[static_cast<std::size_t>(p)];
        observer(rec);
      }
      ++global_step;
    }
    const auto& corruption = stream.config().domains[d].corruption;
    report.domains.push_back(
        acc.finish(d, std::string(data::kind_name(corruption.kind)), corruption.severity, seen));
  }
  if (config.unseen_domains > 0) {
    std::vector<double> seen_err, unseen_err;
    for (const auto& dr : report.domains) (dr.seen ? seen_err : unseen_err).push_back(dr.error);
    report.transfer = metrics::transfer_summary(seen_err, unseen_err);
  }
  return report;
}

std::vector<RatioPoint> masking_curve(const vit::VisionTransformer& model,
                                      const data::DomainStream& stream,
                                      const std::vector<double>& ratios,
                                      const AdaptConfig& config) {
  mask::MaskChainConfig chain_config = config.chain;
  chain_config.ratios = ratios;
  chain_config.validate();
  const auto fill = mask::fill_values(chain_config, stream.dataset().channel_mean,
                                      model.config().channels);
  const mask::PatchGrid grid = model.config().patch_grid();
  std::vector<RatioPoint> points(ratios.size());
  std::vector<std::size_t> wrong(ratios.size(), 0);
  std::size_t samples = 0;
  for (std::size_t d = 0; d < stream.num_domains(); ++d) {
    for (std::size_t i = 0; i < stream.batches_in(d); ++i) {
      const auto sb = stream.batch(d, i);
      const std::size_t batch = sb.labels.size();
      const auto base = model.forward(sb.images, true);
      std::vector<mask::MaskChain> chains(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        chains[b] = mask::build_chain(saliency_for(*base.capture, b, config), chain_config);
      }
      for (std::size_t r = 0; r < ratios.size(); ++r) {
        std::vector<std::vector<std::size_t>> sets(batch);
        for (std::size_t b = 0; b < batch; ++b) sets[b] = chains[b].index_sets[r];
        const auto logits = r == 0 ? base.logits
                                   : model.forward(mask::apply_mask(sb.images, grid, sets, fill)).logits;
        const auto p = loss::ProbBatch::from_logits(ad::stop_gradient(logits), ratios[r]);
        for (double s : loss::entropy_values(p)) points[r].mean_entropy += s;
        const auto pred = vit::argmax_rows(logits);
        for (std::size_t b = 0; b < batch; ++b) wrong[r] += pred[b] != sb.labels[b];
      }
      samples += batch;
    }
  }
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    points[r].ratio = ratios[r];
    points[r].mean_entropy /= static_cast<double>(samples);
    points[r].error = 100.0 * static_cast<double>(wrong[r]) / static_cast<double>(samples);
  }
  return points;
}

}  // namespace rem::adapt
