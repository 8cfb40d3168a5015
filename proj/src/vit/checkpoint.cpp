#include "rem/vit/checkpoint.hpp"

#include <fstream>

#include "rem/common/binary_io.hpp"

namespace rem::vit {
namespace {
constexpr char kMagic[8] = {'R', 'E', 'M', 'V', 'I', 'T', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const Parameters& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, 8);
  io::write_pod(os, kVersion);
  for (std::uint64_t v : {config.image_size, config.patch_size, config.channels,
                          config.embed_dim, config.num_heads, config.depth, config.mlp_dim,
                          config.num_classes}) {
    io::write_pod(os, v);
  }
  io::write_pod<std::uint64_t>(os, config.seed);
  io::write_pod(os, config.norm_eps);
  const auto named = params.named();
  io::write_pod<std::uint64_t>(os, named.size());
  for (const auto& nt : named) {
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(nt.tensor.rank()));
    for (auto dim : nt.tensor.shape()) io::write_pod<std::uint64_t>(os, dim);
    const auto data = nt.tensor.data();
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!os) throw ContractError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("checkpoint: cannot open " + path.string());
  io::expect_magic(is, kMagic, "checkpoint");
  if (io::read_pod<std::uint32_t>(is) != kVersion) {
    throw ContractError("checkpoint: unsupported version");
  }
  ModelConfig cfg;
  for (std::size_t* field : {&cfg.image_size, &cfg.patch_size, &cfg.channels, &cfg.embed_dim,
                             &cfg.num_heads, &cfg.depth, &cfg.mlp_dim, &cfg.num_classes}) {
    *field = io::read_pod<std::uint64_t>(is);
  }
  cfg.seed = io::read_pod<std::uint64_t>(is);
  cfg.norm_eps = io::read_pod<double>(is);
  cfg.validate();

  Parameters params = init_parameters(cfg);
  auto named = params.named();
  const auto count = io::read_pod<std::uint64_t>(is);
  if (count != named.size()) throw ContractError("checkpoint: tensor count mismatch");
  for (auto& nt : named) {
    const auto len = io::read_pod<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw ContractError("checkpoint: truncated input");
    if (name != nt.name) {
      throw ContractError("checkpoint: expected tensor " + nt.name + ", found " + name);
    }
    const auto rank = io::read_pod<std::uint32_t>(is);
    ad::Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(io::read_pod<std::uint64_t>(is));
    if (shape != nt.tensor.shape()) {
      throw ContractError("checkpoint: shape mismatch for " + name);
    }
    const auto values = io::read_array<double>(is, nt.tensor.numel());
    auto dst = nt.tensor.mutable_leaf_data();
    std::copy(values.begin(), values.end(), dst.begin());
  }
  return {cfg, std::move(params)};
}

}  // namespace rem::vit
