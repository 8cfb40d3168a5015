#include "rem/cli/experiment_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "rem/common/error.hpp"
#include "rem/common/rng.hpp"

namespace rem::cli {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", "0", "root seed; every random component derives a named substream from it"},
      {"model.image_size", "32", "square image side in pixels"},
      {"model.patch_size", "8", "patch side in pixels (divides image_size)"},
      {"model.embed_dim", "64", "token width"},
      {"model.heads", "4", "attention heads (divide embed_dim)"},
      {"model.depth", "4", "transformer blocks"},
      {"model.mlp_dim", "128", "hidden width of the block MLP"},
      {"data.classes", "8", "number of shape classes (2..8)"},
      {"data.train_per_class", "256", "source training images per class and epoch"},
      {"data.held_out_per_class", "64", "clean held-out images per class"},
      {"data.stream_pool_per_class", "128", "clean images per class the stream draws from"},
      {"data.background_amplitude", "0.06", "background texture amplitude"},
      {"data.context_tint", "0.04", "chroma of the class-correlated background tint"},
      {"pretrain.epochs", "30", "source training epochs"},
      {"pretrain.lr", "0.002", "Adam peak learning rate"},
      {"pretrain.batch_size", "32", "source training batch size"},
      {"pretrain.warmup_epochs", "1", "linear warmup length before cosine decay"},
      {"pretrain.fresh_data", "true", "draw a new training set every epoch"},
      {"pretrain.occlusion_prob", "0.5", "chance a training image gets random patches filled with the mean"},
      {"pretrain.occlusion_max_ratio", "0.25", "largest occluded fraction of patches"},
      {"pretrain.salient_occlusion", "0.0", "share of occlusions that hide the most-attended patches"},
      {"stream.domains",
       "gaussian_noise:5,impulse_noise:5,gaussian_blur:5,contrast:5,brightness:5,pixelate:5",
       "ordered corruption:severity list"},
      {"stream.batches", "20", "batches per domain"},
      {"stream.batch_size", "32", "test batch size"},
      {"adapt.method", "rem", "source | tent | rem"},
      {"adapt.mode", "continual", "continual | episodic"},
      {"adapt.optimizer", "adam", "adam (0.9, 0.999) | sgd (momentum 0.9)"},
      {"adapt.lr", "0.001", "adaptation learning rate"},
      {"adapt.lambda", "1.0", "ERL weight"},
      {"adapt.margin", "0.0", "ERL margin"},
      {"adapt.ratios", "0,0.1,0.2", "mask chain ratios, first must be 0"},
      {"adapt.fill", "mean", "masked patch fill: mean (per-channel dataset mean) | zero"},
      {"adapt.saliency", "attention", "attention | feature"},
      {"adapt.readout_block", "-1", "block used for saliency, negative counts from the end"},
      {"adapt.readout_mean", "false", "average saliency over all blocks instead"},
      {"adapt.asc", "false", "zero the loss of high-entropy samples"},
      {"adapt.asc_threshold", "0.4", "ASC entropy threshold as a fraction of ln C"},
      {"adapt.unseen_domains", "0", "trailing domains evaluated without adaptation"},
      {"output.dir", "runs", "output directory for adapt and sweep"},
  };
  return keys;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool known(std::string_view key) {
  for (const auto& k : config_keys()) {
    if (k.key == key) return true;
  }
  return false;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index) {
  return Rng(root).split(name, index).seed();
}

double parse_double(std::string_view key, std::string_view text) {
  const std::string s(trim(text));
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + s + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view key, std::string_view text) {
  const auto s = trim(text);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

std::size_t parse_size(std::string_view key, std::string_view text) {
  const auto v = parse_int(key, text);
  if (v < 0) throw ConfigError(std::string(key) + ": must be non-negative");
  return static_cast<std::size_t>(v);
}

bool parse_bool(std::string_view key, std::string_view text) {
  const auto s = trim(text);
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError(std::string(key) + ": expected true/false, got '" + std::string(s) + "'");
}

std::vector<double> parse_double_list(std::string_view key, std::string_view text) {
  std::vector<double> out;
  std::string_view rest = text;
  while (true) {
    const auto comma = rest.find(',');
    out.push_back(parse_double(key, rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

std::vector<data::DomainSpec> parse_domains(std::string_view text, std::size_t batches) {
  std::vector<data::DomainSpec> out;
  std::string_view rest = text;
  while (true) {
    const auto comma = rest.find(',');
    const auto item = trim(rest.substr(0, comma));
    if (item.empty()) throw ConfigError("stream.domains: empty entry");
    out.push_back({data::parse_corruption(item), batches});
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : config_keys()) values_[std::string(k.key)] = std::string(k.default_value);
}

ExperimentConfig ExperimentConfig::parse(std::string_view text, std::string_view origin) {
  ExperimentConfig cfg;
  cfg.text_ = std::string(text);
  std::map<std::string, std::size_t, std::less<>> seen;
  std::size_t line_no = 0;
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (!known(key)) throw ConfigError(where + "unknown key '" + key + "'");
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(where + "key '" + key + "' already set on line " +
                        std::to_string(it->second));
    }
    seen[key] = line_no;
    cfg.values_[key] = value;
  }
  // Surface type errors at load time rather than mid-run.
  (void)cfg.model();
  (void)cfg.pretrain();
  (void)cfg.stream(cfg.seed());
  (void)cfg.adapt(cfg.seed());
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::resolved() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : config_keys()) out.emplace_back(std::string(k.key), get(k.key));
  return out;
}

const std::string& ExperimentConfig::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  return it->second;
}

void ExperimentConfig::set(std::string_view key, std::string value) {
  if (!known(key)) throw ConfigError("unknown key '" + std::string(key) + "'");
  values_[std::string(key)] = std::move(value);
}

std::uint64_t ExperimentConfig::seed() const {
  const auto v = parse_int("seed", get("seed"));
  if (v < 0) throw ConfigError("seed: must be non-negative");
  return static_cast<std::uint64_t>(v);
}

vit::ModelConfig ExperimentConfig::model() const {
  vit::ModelConfig m;
  m.image_size = parse_size("model.image_size", get("model.image_size"));
  m.patch_size = parse_size("model.patch_size", get("model.patch_size"));
  m.embed_dim = parse_size("model.embed_dim", get("model.embed_dim"));
  m.num_heads = parse_size("model.heads", get("model.heads"));
  m.depth = parse_size("model.depth", get("model.depth"));
  m.mlp_dim = parse_size("model.mlp_dim", get("model.mlp_dim"));
  m.num_classes = parse_size("data.classes", get("data.classes"));
  m.seed = derive_seed(seed(), "init");
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return m;
}

namespace {

data::SyntheticDatasetConfig base_data(const ExperimentConfig& c) {
  data::SyntheticDatasetConfig d;
  d.num_classes = parse_size("data.classes", c.get("data.classes"));
  d.image_size = parse_size("model.image_size", c.get("model.image_size"));
  d.patch_size = parse_size("model.patch_size", c.get("model.patch_size"));
  d.background_amplitude = parse_double("data.background_amplitude", c.get("data.background_amplitude"));
  d.context_tint = parse_double("data.context_tint", c.get("data.context_tint"));
  return d;
}

}  // namespace

data::SyntheticDatasetConfig ExperimentConfig::train_data(std::size_t epoch) const {
  auto d = base_data(*this);
  d.samples_per_class = parse_size("data.train_per_class", get("data.train_per_class"));
  const bool fresh = parse_bool("pretrain.fresh_data", get("pretrain.fresh_data"));
  d.seed = derive_seed(seed(), "train", fresh ? epoch : 0);
  return d;
}

data::SyntheticDatasetConfig ExperimentConfig::held_out_data() const {
  auto d = base_data(*this);
  d.samples_per_class = parse_size("data.held_out_per_class", get("data.held_out_per_class"));
  d.seed = derive_seed(seed(), "held-out");
  return d;
}

data::SyntheticDatasetConfig ExperimentConfig::stream_pool(std::uint64_t run_seed) const {
  auto d = base_data(*this);
  d.samples_per_class = parse_size("data.stream_pool_per_class", get("data.stream_pool_per_class"));
  d.seed = derive_seed(run_seed, "stream-pool");
  return d;
}

vit::PretrainOptions ExperimentConfig::pretrain() const {
  vit::PretrainOptions p;
  p.epochs = parse_size("pretrain.epochs", get("pretrain.epochs"));
  p.learning_rate = parse_double("pretrain.lr", get("pretrain.lr"));
  p.batch_size = parse_size("pretrain.batch_size", get("pretrain.batch_size"));
  p.warmup_epochs = parse_double("pretrain.warmup_epochs", get("pretrain.warmup_epochs"));
  p.occlusion_prob = parse_double("pretrain.occlusion_prob", get("pretrain.occlusion_prob"));
  p.occlusion_max_ratio = parse_double("pretrain.occlusion_max_ratio", get("pretrain.occlusion_max_ratio"));
  p.salient_occlusion_prob = parse_double("pretrain.salient_occlusion", get("pretrain.salient_occlusion"));
  if (!(p.salient_occlusion_prob >= 0.0 && p.salient_occlusion_prob <= 1.0)) {
    throw ConfigError("pretrain.salient_occlusion: must be in [0, 1]");
  }
  if (!(p.occlusion_prob >= 0.0 && p.occlusion_prob <= 1.0)) {
    throw ConfigError("pretrain.occlusion_prob: must be in [0, 1]");
  }
  if (!(p.occlusion_max_ratio >= 0.0 && p.occlusion_max_ratio <= 1.0)) {
    throw ConfigError("pretrain.occlusion_max_ratio: must be in [0, 1]");
  }
  p.seed = derive_seed(seed(), "shuffle");
  if (!(p.learning_rate > 0.0)) throw ConfigError("pretrain.lr: must be positive");
  if (p.batch_size == 0) throw ConfigError("pretrain.batch_size: must be positive");
  if (!(p.warmup_epochs >= 0.0)) throw ConfigError("pretrain.warmup_epochs: must be >= 0");
  return p;
}

data::StreamConfig ExperimentConfig::stream(std::uint64_t run_seed) const {
  data::StreamConfig s;
  const auto batches = parse_size("stream.batches", get("stream.batches"));
  s.domains = parse_domains(get("stream.domains"), batches);
  s.batch_size = parse_size("stream.batch_size", get("stream.batch_size"));
  s.seed = derive_seed(run_seed, "stream");
  try {
    s.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return s;
}

adapt::AdaptConfig ExperimentConfig::adapt(std::uint64_t run_seed) const {
  adapt::AdaptConfig a;
  a.method = adapt::parse_method(get("adapt.method"));
  a.reset = adapt::parse_reset(get("adapt.mode"));
  a.optimizer.kind = adapt::parse_optimizer(get("adapt.optimizer"));
  a.optimizer.learning_rate = parse_double("adapt.lr", get("adapt.lr"));
  a.lambda = parse_double("adapt.lambda", get("adapt.lambda"));
  a.margin = parse_double("adapt.margin", get("adapt.margin"));
  a.chain.ratios = parse_double_list("adapt.ratios", get("adapt.ratios"));
  const auto& fill = get("adapt.fill");
  if (fill == "mean") {
    a.chain.fill = mask::FillPolicy::dataset_mean;
  } else if (fill == "zero") {
    a.chain.fill = mask::FillPolicy::zero;
  } else {
    throw ConfigError("adapt.fill: expected mean or zero, got '" + fill + "'");
  }
  a.saliency = adapt::parse_saliency(get("adapt.saliency"));
  a.readout.block = static_cast<int>(parse_int("adapt.readout_block", get("adapt.readout_block")));
  a.readout.mean_over_blocks = parse_bool("adapt.readout_mean", get("adapt.readout_mean"));
  a.asc = parse_bool("adapt.asc", get("adapt.asc"));
  a.asc_threshold = parse_double("adapt.asc_threshold", get("adapt.asc_threshold"));
  a.unseen_domains = parse_size("adapt.unseen_domains", get("adapt.unseen_domains"));
  a.seed = run_seed;
  try {
    a.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("adapt: ") + e.what());
  }
  return a;
}

std::filesystem::path ExperimentConfig::output_dir() const { return get("output.dir"); }

}  // namespace rem::cli
