#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "rem/common/error.hpp"
#include "rem/common/rng.hpp"
#include "rem/mask/mask_chain.hpp"

using namespace rem;
using namespace rem::mask;

namespace {

SaliencyScore score_of(std::vector<double> v) { return {std::move(v), Provenance::attention}; }

PatchGrid grid32() { return {{3, 32, 32}, 8}; }

std::vector<double> ramp_image(const data::ImageGeometry& g) {
  std::vector<double> img(g.values());
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i % 97) / 97.0;
  return img;
}

}  // namespace

TEST(BuildChain, SortedPrefix) {
  MaskChainConfig cfg;
  cfg.ratios = {0.0, 1.0 / 3.0, 2.0 / 3.0};
  const auto chain = build_chain(score_of({0.5, 0.3, 0.2}), cfg);
  ASSERT_EQ(chain.index_sets.size(), 3u);
  EXPECT_TRUE(chain.index_sets[0].empty());
  EXPECT_EQ(chain.index_sets[1], (std::vector<std::size_t>{0}));
  EXPECT_EQ(chain.index_sets[2], (std::vector<std::size_t>{0, 1}));
}

TEST(BuildChain, TiesGoToLowerIndex) {
  MaskChainConfig cfg;
  cfg.ratios = {0.0, 0.5};
  const auto chain = build_chain(score_of({0.25, 0.25, 0.25, 0.25}), cfg);
  EXPECT_EQ(chain.index_sets[1], (std::vector<std::size_t>{0, 1}));
}

TEST(BuildChain, DescendingOrderWithinSet) {
  MaskChainConfig cfg;
  cfg.ratios = {0.0, 0.75};
  const auto chain = build_chain(score_of({0.1, 0.9, 0.4, 0.6}), cfg);
  EXPECT_EQ(chain.index_sets[1], (std::vector<std::size_t>{1, 3, 2}));
}

TEST(BuildChain, CountIsFloorOfRatioTimesPatches) {
  EXPECT_EQ(masked_count(0.0, 16), 0u);
  EXPECT_EQ(masked_count(0.1, 16), 1u);
  EXPECT_EQ(masked_count(0.2, 16), 3u);
  EXPECT_EQ(masked_count(0.05, 16), 0u);
  EXPECT_EQ(masked_count(0.29, 100), 29u);
  EXPECT_EQ(masked_count(1.0, 16), 16u);
}

// Random scores and chains, checked against an independent full re-sort.
TEST(BuildChain, NestingAndCardinalityProperties) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t patches = 1 + rng.below(64);
    std::vector<double> values(patches);
    for (auto& v : values) v = rng.below(4) == 0 ? 0.5 : rng.uniform();  // some ties
    const std::size_t n = 1 + rng.below(4);
    MaskChainConfig cfg;
    cfg.ratios = {0.0};
    for (std::size_t i = 0; i < n; ++i) cfg.ratios.push_back(rng.uniform());
    std::sort(cfg.ratios.begin(), cfg.ratios.end());

    const auto chain = build_chain(score_of(values), cfg);
    std::vector<std::size_t> order(patches);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

    ASSERT_TRUE(chain.index_sets[0].empty());
    for (std::size_t i = 0; i < cfg.ratios.size(); ++i) {
      const auto& set = chain.index_sets[i];
      ASSERT_EQ(set.size(), masked_count(cfg.ratios[i], patches)) << trial;
      ASSERT_TRUE(std::equal(set.begin(), set.end(), order.begin())) << trial;
      if (i > 0) {
        const auto& prev = chain.index_sets[i - 1];
        ASSERT_TRUE(std::equal(prev.begin(), prev.end(), set.begin())) << trial;
      }
    }
    EXPECT_EQ(build_chain(score_of(values), cfg).index_sets, chain.index_sets);
  }
}

TEST(BuildChain, RejectsBadInputs) {
  MaskChainConfig cfg;
  EXPECT_THROW(build_chain(score_of({0.1, -0.2}), cfg), ContractError);
  EXPECT_THROW(build_chain(score_of({0.1, NAN}), cfg), ContractError);
  cfg.ratios = {0.1, 0.2};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.ratios = {0.0, 0.3, 0.2};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.ratios = {0.0, 1.5};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ApplyMask, EmptySetIsBitIdentical) {
  const auto g = grid32();
  const auto img = ramp_image(g.geometry);
  const std::vector<double> fill{0.4, 0.5, 0.6};
  EXPECT_EQ(apply_mask(img, g, {}, fill), img);
}

TEST(ApplyMask, FullSetZeroFillGivesZeros) {
  const auto g = grid32();
  std::vector<std::size_t> all(g.patches());
  std::iota(all.begin(), all.end(), std::size_t{0});
  MaskChainConfig cfg;
  cfg.fill = FillPolicy::zero;
  const auto fill = fill_values(cfg, std::vector<double>{0.3, 0.3, 0.3}, 3);
  const auto out = apply_mask(ramp_image(g.geometry), g, all, fill);
  EXPECT_TRUE(std::all_of(out.begin(), out.end(), [](double v) { return v == 0.0; }));
}

TEST(ApplyMask, TopLeftPatchOnly) {
  const auto g = grid32();
  const auto img = ramp_image(g.geometry);
  const std::vector<double> fill{-1.0, -2.0, -3.0};
  const std::vector<std::size_t> set{0};
  const auto out = apply_mask(img, g, set, fill);
  std::size_t filled = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 32; ++y) {
      for (std::size_t x = 0; x < 32; ++x) {
        const std::size_t i = c * 1024 + y * 32 + x;
        if (y < 8 && x < 8) {
          EXPECT_EQ(out[i], fill[c]);
          ++filled;
        } else {
          EXPECT_EQ(out[i], img[i]);
        }
      }
    }
  }
  EXPECT_EQ(filled, 3u * 64u);
}

TEST(ApplyMask, FillRegionGrowsAlongChain) {
  const auto g = grid32();
  Rng rng(5);
  std::vector<double> values(g.patches());
  for (auto& v : values) v = rng.uniform();
  MaskChainConfig cfg;
  cfg.ratios = {0.0, 0.1, 0.2, 0.5};
  const auto chain = build_chain(score_of(values), cfg);
  const auto img = ramp_image(g.geometry);
  const std::vector<double> fill{-1.0, -1.0, -1.0};
  std::vector<double> prev = img;
  for (const auto& set : chain.index_sets) {
    const auto cur = apply_mask(img, g, set, fill);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (prev[i] == -1.0) ASSERT_EQ(cur[i], -1.0);
    }
    prev = cur;
  }
}

TEST(ApplyMask, OutOfRangeIndexThrows) {
  const auto g = grid32();
  const std::vector<std::size_t> set{16};
  EXPECT_THROW(apply_mask(ramp_image(g.geometry), g, set, std::vector<double>{0, 0, 0}),
               ContractError);
}

TEST(ApplyMask, BatchedMatchesSingleImage) {
  const auto g = grid32();
  const auto a = ramp_image(g.geometry);
  std::vector<double> b(a.rbegin(), a.rend());
  std::vector<double> both = a;
  both.insert(both.end(), b.begin(), b.end());
  const std::vector<double> fill{0.1, 0.2, 0.3};
  const std::vector<std::vector<std::size_t>> sets{{3, 5}, {}};
  const auto out = apply_mask(ad::Tensor({2, 3, 32, 32}, both), g, sets, fill);
  const auto ma = apply_mask(a, g, sets[0], fill);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(out[i], ma[i]);
    ASSERT_EQ(out[a.size() + i], b[i]);
  }
}

TEST(FeatureSaliency, Examples) {
  const auto zero = score_feature_activation(std::vector<double>(4 * 3, 0.0), 4, 3);
  EXPECT_EQ(zero.values, std::vector<double>(4, 0.0));
  EXPECT_EQ(zero.provenance, Provenance::feature_activation);

  std::vector<double> onehot(4 * 3, 0.0);
  for (std::size_t p = 0; p < 4; ++p) onehot[p * 3 + p % 3] = 1.0;
  EXPECT_EQ(score_feature_activation(onehot, 4, 3).values, std::vector<double>(4, 1.0));

  Rng rng(9);
  std::vector<double> f(16 * 8);
  for (auto& v : f) v = rng.uniform(-2.0, 2.0);
  const auto s = score_feature_activation(f, 16, 8);
  for (std::size_t p = 0; p < 16; ++p) {
    double sq = 0.0;
    for (std::size_t k = 0; k < 8; ++k) sq += f[p * 8 + k] * f[p * 8 + k];
    EXPECT_NEAR(s.values[p], std::sqrt(sq), 1e-12);
  }
  EXPECT_THROW(score_feature_activation(f, 15, 8), DimensionError);
}

TEST(ChainDump, WritesPortablePixmap) {
  const auto path = std::filesystem::temp_directory_path() / "rem_chain_dump_test.ppm";
  const data::ImageGeometry g{3, 8, 8};
  std::vector<std::vector<std::vector<double>>> grid(2, std::vector<std::vector<double>>(3, std::vector<double>(g.values(), 0.5)));
  write_chain_grid_ppm(path, grid, g);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  in >> magic;
  EXPECT_EQ(magic, "P6");
  std::filesystem::remove(path);
}
