#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "rem/data/corruption.hpp"
#include "rem/data/image_set.hpp"

namespace rem::data {

struct DomainSpec {
  Corruption corruption;
  std::size_t batches = 20;
};

struct StreamConfig {
  std::vector<DomainSpec> domains;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  // Six kinds at severity 5, 20 batches of 32 each.
  static StreamConfig default_continual(std::uint64_t seed);
  void validate() const;
};

// Images reach the adaptation loop; labels are evaluation metadata only.
struct StreamBatch {
  std::size_t domain = 0;
  std::size_t index = 0;  // batch index within the domain
  ad::Tensor images;      // [B, C, H, W]
  std::vector<int> labels;
};

// Ordered corrupted domains drawn from a clean image set. Batches are produced
// on demand and are a pure function of (dataset, config).
class DomainStream {
 public:
  DomainStream(std::shared_ptr<const ImageSet> dataset, StreamConfig config);

  const StreamConfig& config() const noexcept { return config_; }
  const ImageSet& dataset() const noexcept { return *dataset_; }
  std::size_t num_domains() const noexcept { return config_.domains.size(); }
  std::size_t batches_in(std::size_t domain) const { return config_.domains.at(domain).batches; }

  StreamBatch batch(std::size_t domain, std::size_t index) const;

 private:
  std::shared_ptr<const ImageSet> dataset_;
  StreamConfig config_;
  std::vector<std::vector<std::size_t>> order_;  // per-domain sample order
};

DomainStream build_stream(std::shared_ptr<const ImageSet> dataset, StreamConfig config);

}  // namespace rem::data
