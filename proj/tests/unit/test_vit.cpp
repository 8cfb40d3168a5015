#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <filesystem>
#include <numeric>

#include "rem/adapt/engine.hpp"
#include "rem/autodiff/ops.hpp"
#include "rem/common/error.hpp"
#include "rem/common/rng.hpp"
#include "rem/data/synthetic.hpp"
#include "rem/vit/checkpoint.hpp"
#include "rem/vit/model.hpp"
#include "rem/vit/pretrain.hpp"

using namespace rem;
using namespace rem::vit;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.image_size = 16;
  c.patch_size = 8;
  c.embed_dim = 8;
  c.num_heads = 2;
  c.depth = 2;
  c.mlp_dim = 16;
  c.num_classes = 4;
  c.seed = 7;
  return c;
}

ad::Tensor random_images(std::size_t batch, const ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(batch * c.channels * c.image_size * c.image_size);
  for (auto& x : v) x = rng.uniform();
  return ad::Tensor({batch, c.channels, c.image_size, c.image_size}, std::move(v));
}

std::vector<double> row_of(const ad::Tensor& t, std::size_t r) {
  const std::size_t w = t.dim(1);
  return {t.data().begin() + static_cast<std::ptrdiff_t>(r * w),
          t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * w)};
}

}  // namespace

TEST(ModelConfig, ValidatesDivisibility) {
  ModelConfig c;
  c.patch_size = 7;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.num_heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(ModelConfig{}.validate());
  EXPECT_EQ(ModelConfig{}.num_patches(), 16u);
  EXPECT_EQ(ModelConfig{}.num_tokens(), 17u);
}

TEST(Parameters, TrainableSubsetIsLayerNormOnly) {
  VisionTransformer model(ModelConfig{});
  const auto trainable = adapt::select_trainable(model.params());
  EXPECT_EQ(trainable.size(), 18u);  // 4 blocks x 2 norms x (gamma, beta) + final norm
  std::size_t flagged = 0;
  for (const auto& nt : model.params().named()) {
    EXPECT_EQ(nt.tensor.requires_grad(), is_normalization_parameter(nt.name)) << nt.name;
    flagged += nt.tensor.requires_grad();
  }
  EXPECT_EQ(flagged, 18u);
  EXPECT_EQ(model.params().normalization().size(), 18u);
}

TEST(Forward, IdenticalImagesGiveIdenticalRows) {
  const auto c = small_config();
  VisionTransformer model(c);
  auto one = random_images(1, c, 3);
  std::vector<double> two(one.data().begin(), one.data().end());
  two.insert(two.end(), one.data().begin(), one.data().end());
  const auto logits = model.forward(ad::Tensor({2, 3, 16, 16}, two)).logits;
  EXPECT_EQ(row_of(logits, 0), row_of(logits, 1));
}

TEST(Forward, UnmaskedImageMatchesPlainForward) {
  const auto c = small_config();
  VisionTransformer model(c);
  const auto images = random_images(3, c, 4);
  const std::vector<std::vector<std::size_t>> none(3);
  const auto masked = mask::apply_mask(images, c.patch_grid(), none, std::vector<double>{0.5, 0.5, 0.5});
  const auto a = model.forward(images).logits;
  const auto b = model.forward(masked).logits;
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Forward, BatchPermutationPermutesRows) {
  const auto c = small_config();
  VisionTransformer model(c);
  const auto images = random_images(5, c, 8);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  const std::size_t n = images.numel() / 5;
  std::vector<double> shuffled;
  for (auto i : perm) {
    shuffled.insert(shuffled.end(), images.data().begin() + static_cast<std::ptrdiff_t>(i * n),
                    images.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  }
  const auto a = model.forward(images).logits;
  const auto b = model.forward(ad::Tensor(images.shape(), shuffled)).logits;
  for (std::size_t r = 0; r < perm.size(); ++r) {
    const auto want = row_of(a, perm[r]);
    const auto got = row_of(b, r);
    for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
  }
}

TEST(Forward, WrongImageShapeThrows) {
  VisionTransformer model(small_config());
  EXPECT_THROW(model.forward(ad::Tensor::zeros({1, 3, 8, 8})), DimensionError);
}

TEST(Attention, RowsAreDistributionsAndScoreSumsToHeads) {
  ModelConfig c;
  VisionTransformer model(c);
  const auto fr = model.forward(random_images(4, c, 11), true);
  ASSERT_TRUE(fr.capture.has_value());
  const auto& cap = *fr.capture;
  ASSERT_EQ(cap.attention.size(), c.depth);
  for (std::size_t b = 0; b < c.depth; ++b) {
    for (std::size_t s = 0; s < 4; ++s) {
      for (std::size_t h = 0; h < c.num_heads; ++h) {
        const auto r = cap.row(b, s, h);
        double total = 0.0;
        for (double v : r) {
          EXPECT_GE(v, 0.0);
          total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
      }
    }
  }
  for (std::size_t s = 0; s < 4; ++s) {
    for (AttentionReadout readout : {AttentionReadout{}, AttentionReadout{0, false},
                                     AttentionReadout{-1, true}}) {
      const auto score = attention_score(cap, s, readout);
      ASSERT_EQ(score.size(), c.num_patches());
      EXPECT_NEAR(std::accumulate(score.values.begin(), score.values.end(), 0.0),
                  static_cast<double>(c.num_heads), 1e-6);
    }
  }
  EXPECT_THROW(attention_score(std::optional<AttentionCapture>{}, 0), ContractError);
  EXPECT_THROW(attention_score(cap, 0, {7, false}), ContractError);
}

TEST(Attention, IdenticalKeysGiveUniformScore) {
  auto c = small_config();
  c.num_heads = 1;
  VisionTransformer model(c);
  auto& pos = model.params().pos_embed;
  std::fill(pos.mutable_leaf_data().begin(), pos.mutable_leaf_data().end(), 0.0);
  const auto fr = model.forward(ad::Tensor({1, 3, 16, 16}, std::vector<double>(3 * 256, 0.3)), true);
  const auto score = attention_score(fr.capture, 0, {0, false});
  for (double v : score.values) EXPECT_NEAR(v, 1.0 / 4.0, 1e-12);
}

// First-block scores recomputed by hand from the raw weights.
TEST(Attention, MatchesDirectSoftmax) {
  auto c = small_config();
  c.depth = 1;
  VisionTransformer model(c);
  const auto images = random_images(1, c, 21);
  const auto score = attention_score(model.forward(images, true).capture, 0, {0, false});

  const auto& p = model.params();
  const auto& blk = p.blocks[0];
  const std::size_t d = c.embed_dim, np = c.num_patches(), pd = c.patch_dim();
  const auto patches = patchify(images, c);
  std::vector<std::vector<double>> tok(np + 1, std::vector<double>(d));
  for (std::size_t k = 0; k < d; ++k) tok[0][k] = p.cls_token[k] + p.pos_embed[k];
  for (std::size_t t = 0; t < np; ++t) {
    for (std::size_t k = 0; k < d; ++k) {
      double acc = p.patch_b[k];
      for (std::size_t i = 0; i < pd; ++i) acc += patches[t * pd + i] * p.patch_w[i * d + k];
      tok[t + 1][k] = acc + p.pos_embed[(t + 1) * d + k];
    }
  }
  auto norm = [&](const std::vector<double>& x) {
    double mu = 0.0, var = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(d);
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    std::vector<double> y(d);
    for (std::size_t k = 0; k < d; ++k) {
      y[k] = (x[k] - mu) / std::sqrt(var + c.norm_eps) * blk.norm1_gamma[k] + blk.norm1_beta[k];
    }
    return y;
  };
  auto project = [&](const std::vector<double>& x, const ad::Tensor& w, const ad::Tensor& b) {
    std::vector<double> y(d);
    for (std::size_t k = 0; k < d; ++k) {
      y[k] = b[k];
      for (std::size_t i = 0; i < d; ++i) y[k] += x[i] * w[i * d + k];
    }
    return y;
  };
  const auto q = project(norm(tok[0]), blk.wq, blk.bq);
  const std::size_t hd = c.head_dim();
  std::vector<double> want(np, 0.0);
  for (std::size_t h = 0; h < c.num_heads; ++h) {
    std::vector<double> s(np);
    for (std::size_t t = 0; t < np; ++t) {
      const auto k = project(norm(tok[t + 1]), blk.wk, blk.bk);
      double dot = 0.0;
      for (std::size_t i = h * hd; i < (h + 1) * hd; ++i) dot += q[i] * k[i];
      s[t] = dot / std::sqrt(static_cast<double>(hd));
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (auto& v : s) z += (v = std::exp(v - mx));
    for (std::size_t t = 0; t < np; ++t) want[t] += s[t] / z;
  }
  for (std::size_t t = 0; t < np; ++t) EXPECT_NEAR(score.values[t], want[t], 1e-12);
}

TEST(Gradients, LayerNormGammaMatchesFiniteDifferences) {
  const auto c = small_config();
  VisionTransformer model(c);
  const auto images = random_images(3, c, 13);
  // Fixed random projection of the logits to a scalar.
  auto objective = [&](const VisionTransformer& m) {
    const auto logits = m.forward(images).logits;
    std::vector<double> w(logits.numel());
    Rng rng(17);
    for (auto& x : w) x = rng.uniform(-1.0, 1.0);
    return ad::sum(ad::mul(logits, ad::Tensor(logits.shape(), w)));
  };
  auto trainable = adapt::select_trainable(model.params());
  auto loss = objective(model);
  ad::backward(loss);
  const std::vector<ad::Tensor*> gammas{&model.params().blocks[0].norm1_gamma,
                                        &model.params().blocks[1].norm2_gamma,
                                        &model.params().norm_gamma};
  for (auto* g : gammas) {
    const std::vector<double> analytic(g->grad().begin(), g->grad().end());
    for (std::size_t i = 0; i < g->numel(); ++i) {
      const double keep = (*g)[i];
      const double h = 1e-5;
      g->mutable_leaf_data()[i] = keep + h;
      const double up = objective(model).item();
      g->mutable_leaf_data()[i] = keep - h;
      const double down = objective(model).item();
      g->mutable_leaf_data()[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      EXPECT_LT(std::abs(analytic[i] - fd) / std::max(1e-8, std::abs(fd)), 1e-3) << i;
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto c = small_config();
  VisionTransformer model(c);
  const auto path = std::filesystem::temp_directory_path() / "rem_vit_roundtrip.ckpt";
  save_checkpoint(path, c, model.params());
  const auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.config, c);
  const auto a = model.params().named();
  const auto b = loaded.params.named();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].tensor.shape(), b[i].tensor.shape());
    EXPECT_EQ(std::memcmp(a[i].tensor.data().data(), b[i].tensor.data().data(),
                          a[i].tensor.numel() * sizeof(double)),
              0)
        << a[i].name;
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsForeignFile) {
  const auto path = std::filesystem::temp_directory_path() / "rem_vit_bad.ckpt";
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a checkpoint at all";
  }
  EXPECT_THROW(load_checkpoint(path), std::exception);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), std::exception);
}

TEST(Parameters, CloneIsIndependentAndAssignIsBitwise) {
  VisionTransformer model(small_config());
  auto copy = model.params().clone();
  copy.norm_gamma.mutable_leaf_data()[0] += 1.0;
  EXPECT_NE(copy.norm_gamma[0], model.params().norm_gamma[0]);
  model.params().assign_from(copy);
  EXPECT_EQ(copy.norm_gamma[0], model.params().norm_gamma[0]);
}

TEST(Pretrain, LearningRateSchedule) {
  PretrainOptions o;
  o.epochs = 10;
  o.learning_rate = 1.0;
  o.warmup_epochs = 1.0;
  EXPECT_LT(pretrain_learning_rate(o, 0.0), 0.01);
  EXPECT_NEAR(pretrain_learning_rate(o, 1.0), 1.0, 1e-12);
  EXPECT_NEAR(pretrain_learning_rate(o, 5.5), 0.5, 1e-12);
  EXPECT_NEAR(pretrain_learning_rate(o, 10.0), 0.0, 1e-12);
}

TEST(Pretrain, SmallRunIsDeterministicAndLearns) {
  auto c = small_config();
  data::SyntheticDatasetConfig dc;
  dc.num_classes = 4;
  dc.image_size = 16;
  dc.patch_size = 4;
  dc.samples_per_class = 16;
  auto train = data::gen_dataset(dc);
  dc.seed = 2;
  auto held = data::gen_dataset(dc);
  PretrainOptions o;
  o.epochs = 3;
  o.batch_size = 16;
  const auto a = pretrain_source(c, train, held, o);
  const auto b = pretrain_source(c, train, held, o);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  ASSERT_EQ(a.epoch_loss.size(), 3u);
  EXPECT_LT(a.epoch_loss.back(), a.epoch_loss.front());
}

TEST(Pretrain, CrossEntropyChecksLabels) {
  const ad::Tensor logits({2, 2}, {0.0, 0.0, 1.0, -1.0});
  EXPECT_NEAR(cross_entropy(logits, {0, 0}).item(),
              0.5 * (std::log(2.0) + std::log(1.0 + std::exp(-2.0))), 1e-12);
  EXPECT_THROW(cross_entropy(logits, {0}), DimensionError);
  EXPECT_THROW(cross_entropy(logits, {0, 5}), ContractError);
}
