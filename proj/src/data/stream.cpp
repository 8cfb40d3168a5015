#include "rem/data/stream.hpp"

#include <numeric>

#include "rem/common/error.hpp"

namespace rem::data {

StreamConfig StreamConfig::default_continual(std::uint64_t seed) {
  StreamConfig cfg;
  cfg.seed = seed;
  for (auto kind : kAllCorruptions) cfg.domains.push_back({{kind, 5}, 20});
  return cfg;
}

void StreamConfig::validate() const {
  if (domains.empty()) throw ConfigError("stream: at least one domain required");
  if (batch_size == 0) throw ConfigError("stream: batch_size must be >= 1");
  for (const auto& d : domains) {
    if (d.corruption.severity < 1 || d.corruption.severity > 5) {
      throw ConfigError("stream: severity out of range in " + d.corruption.label());
    }
    if (d.batches == 0) throw ConfigError("stream: domain with zero batches");
  }
}

DomainStream::DomainStream(std::shared_ptr<const ImageSet> dataset, StreamConfig config)
    : dataset_(std::move(dataset)), config_(std::move(config)) {
  if (!dataset_ || dataset_->size() == 0) throw ContractError("stream: empty dataset");
  config_.validate();
  const Rng root(config_.seed);
  const std::size_t n = dataset_->size();
  for (std::size_t d = 0; d < config_.domains.size(); ++d) {
    const std::size_t need = config_.domains[d].batches * config_.batch_size;
    Rng rng = root.split("order", d);
    std::vector<std::size_t> order;
    order.reserve(need);
    std::vector<std::size_t> perm(n);
    while (order.size() < need) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(perm.begin(), perm.end());
      for (std::size_t i = 0; i < n && order.size() < need; ++i) order.push_back(perm[i]);
    }
    order_.push_back(std::move(order));
  }
}

StreamBatch DomainStream::batch(std::size_t domain, std::size_t index) const {
  if (domain >= num_domains() || index >= batches_in(domain)) {
    throw ContractError("stream: batch (" + std::to_string(domain) + "," +
                        std::to_string(index) + ") out of range");
  }
  const std::size_t bs = config_.batch_size;
  std::span<const std::size_t> ids(order_[domain].data() + index * bs, bs);
  StreamBatch out;
  out.domain = domain;
  out.index = index;
  out.labels = dataset_->batch_labels(ids);

  const auto& g = dataset_->geometry;
  const Corruption corruption = config_.domains[domain].corruption;
  std::vector<double> pixels(bs * g.values());
  const Rng root = Rng(config_.seed).split("corrupt", domain);
  for (std::size_t i = 0; i < bs; ++i) {
    auto src = dataset_->image(ids[i]);
    std::span<double> dst(pixels.data() + i * g.values(), g.values());
    std::copy(src.begin(), src.end(), dst.begin());
    Rng rng = root.split("sample", index * bs + i);
    corrupt(dst, g, corruption, rng);
  }
  out.images = ad::Tensor({bs, g.channels, g.height, g.width}, std::move(pixels));
  return out;
}

DomainStream build_stream(std::shared_ptr<const ImageSet> dataset, StreamConfig config) {
  return DomainStream(std::move(dataset), std::move(config));
}

}  // namespace rem::data
