#include "rem/data/dataset_io.hpp"

#include <fstream>

#include "rem/common/binary_io.hpp"

namespace rem::data {
namespace {
constexpr char kMagic[8] = {'R', 'E', 'M', 'D', 'A', 'T', 'A', '\0'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_dataset(const ImageSet& set, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("dataset: cannot open " + path.string() + " for writing");
  os.write(kMagic, 8);
  io::write_pod(os, kVersion);
  io::write_pod<std::uint64_t>(os, set.size());
  io::write_pod<std::uint64_t>(os, set.geometry.channels);
  io::write_pod<std::uint64_t>(os, set.geometry.height);
  io::write_pod<std::uint64_t>(os, set.geometry.width);
  io::write_pod<std::uint64_t>(os, set.num_classes);
  io::write_array(os, set.channel_mean);
  std::vector<std::int32_t> labels(set.labels.begin(), set.labels.end());
  io::write_array(os, labels);
  io::write_array(os, set.pixels);
  if (!os) throw ContractError("dataset: write failed for " + path.string());
}

ImageSet load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("dataset: cannot open " + path.string());
  io::expect_magic(is, kMagic, "dataset");
  if (io::read_pod<std::uint32_t>(is) != kVersion) {
    throw ContractError("dataset: unsupported version");
  }
  ImageSet set;
  const auto count = io::read_pod<std::uint64_t>(is);
  set.geometry.channels = io::read_pod<std::uint64_t>(is);
  set.geometry.height = io::read_pod<std::uint64_t>(is);
  set.geometry.width = io::read_pod<std::uint64_t>(is);
  set.num_classes = io::read_pod<std::uint64_t>(is);
  set.channel_mean = io::read_array<double>(is, set.geometry.channels);
  const auto labels = io::read_array<std::int32_t>(is, count);
  set.labels.assign(labels.begin(), labels.end());
  set.pixels = io::read_array<double>(is, count * set.geometry.values());
  return set;
}

}  // namespace rem::data
