#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rem/adapt/engine.hpp"
#include "rem/data/stream.hpp"
#include "rem/data/synthetic.hpp"
#include "rem/vit/model.hpp"
#include "rem/vit/pretrain.hpp"

namespace rem::cli {

struct ConfigKey {
  std::string_view key;
  std::string_view default_value;
  std::string_view help;
};

// Every accepted key, in documentation order.
const std::vector<ConfigKey>& config_keys();

// Flat "key = value" document; '#' starts a comment. Unknown or repeated keys
// are rejected. Keys not given take their documented default.
class ExperimentConfig {
 public:
  ExperimentConfig();  // all defaults

  static ExperimentConfig parse(std::string_view text, std::string_view origin = "<config>");
  static ExperimentConfig load(const std::filesystem::path& path);

  const std::string& text() const noexcept { return text_; }
  // Resolved key/value pairs in documentation order.
  std::vector<std::pair<std::string, std::string>> resolved() const;

  const std::string& get(std::string_view key) const;
  void set(std::string_view key, std::string value);  // validates the key

  std::uint64_t seed() const;
  vit::ModelConfig model() const;
  // Clean source training set for one epoch (fresh draw per epoch when
  // pretrain.fresh_data is set), the held-out clean set, and the stream pool.
  data::SyntheticDatasetConfig train_data(std::size_t epoch) const;
  data::SyntheticDatasetConfig held_out_data() const;
  data::SyntheticDatasetConfig stream_pool(std::uint64_t seed) const;
  vit::PretrainOptions pretrain() const;
  data::StreamConfig stream(std::uint64_t seed) const;
  adapt::AdaptConfig adapt(std::uint64_t seed) const;
  std::filesystem::path output_dir() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
  std::string text_;
};

std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0);

// Value parsers shared with the command-line layer; ConfigError on bad input.
double parse_double(std::string_view key, std::string_view text);
std::int64_t parse_int(std::string_view key, std::string_view text);
std::size_t parse_size(std::string_view key, std::string_view text);
bool parse_bool(std::string_view key, std::string_view text);
std::vector<double> parse_double_list(std::string_view key, std::string_view text);
std::vector<data::DomainSpec> parse_domains(std::string_view text, std::size_t batches);

}  // namespace rem::cli
