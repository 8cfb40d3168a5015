#include "rem/vit/model.hpp"

#include <algorithm>
#include <cmath>

#include "rem/autodiff/ops.hpp"
#include "rem/common/error.hpp"
#include "rem/common/rng.hpp"

namespace rem::vit {

void ModelConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("model: patch_size must divide image_size");
  }
  if (num_heads == 0 || embed_dim % num_heads != 0) {
    throw ConfigError("model: embed_dim must be divisible by num_heads");
  }
  if (channels == 0 || depth == 0 || mlp_dim == 0 || num_classes < 2) {
    throw ConfigError("model: channels, depth and mlp_dim must be positive, classes >= 2");
  }
  if (!(norm_eps > 0.0)) throw ConfigError("model: norm_eps must be positive");
}

bool is_normalization_parameter(const std::string& name) {
  const bool affine = name.ends_with(".gamma") || name.ends_with(".beta");
  return affine && name.find("norm") != std::string::npos;
}

std::vector<NamedTensor> Parameters::named() const {
  std::vector<NamedTensor> out = {
      {"patch_embed.weight", patch_w},
      {"patch_embed.bias", patch_b},
      {"cls_token", cls_token},
      {"pos_embed", pos_embed},
  };
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    out.push_back({p + "norm1.gamma", b.norm1_gamma});
    out.push_back({p + "norm1.beta", b.norm1_beta});
    out.push_back({p + "attn.q.weight", b.wq});
    out.push_back({p + "attn.q.bias", b.bq});
    out.push_back({p + "attn.k.weight", b.wk});
    out.push_back({p + "attn.k.bias", b.bk});
    out.push_back({p + "attn.v.weight", b.wv});
    out.push_back({p + "attn.v.bias", b.bv});
    out.push_back({p + "attn.proj.weight", b.wo});
    out.push_back({p + "attn.proj.bias", b.bo});
    out.push_back({p + "norm2.gamma", b.norm2_gamma});
    out.push_back({p + "norm2.beta", b.norm2_beta});
    out.push_back({p + "mlp.fc1.weight", b.mlp_w1});
    out.push_back({p + "mlp.fc1.bias", b.mlp_b1});
    out.push_back({p + "mlp.fc2.weight", b.mlp_w2});
    out.push_back({p + "mlp.fc2.bias", b.mlp_b2});
  }
  out.push_back({"norm.gamma", norm_gamma});
  out.push_back({"norm.beta", norm_beta});
  out.push_back({"head.weight", head_w});
  out.push_back({"head.bias", head_b});
  return out;
}

std::vector<NamedTensor> Parameters::normalization() const {
  std::vector<NamedTensor> out;
  for (auto& nt : named()) {
    if (is_normalization_parameter(nt.name)) out.push_back(std::move(nt));
  }
  return out;
}

namespace {

ad::Tensor copy_leaf(const ad::Tensor& t) {
  return ad::Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()),
                    t.requires_grad());
}

}  // namespace

Parameters Parameters::clone() const {
  Parameters p;
  p.patch_w = copy_leaf(patch_w);
  p.patch_b = copy_leaf(patch_b);
  p.cls_token = copy_leaf(cls_token);
  p.pos_embed = copy_leaf(pos_embed);
  for (const auto& b : blocks) {
    p.blocks.push_back({copy_leaf(b.norm1_gamma), copy_leaf(b.norm1_beta), copy_leaf(b.wq),
                        copy_leaf(b.bq), copy_leaf(b.wk), copy_leaf(b.bk), copy_leaf(b.wv),
                        copy_leaf(b.bv), copy_leaf(b.wo), copy_leaf(b.bo),
                        copy_leaf(b.norm2_gamma), copy_leaf(b.norm2_beta),
                        copy_leaf(b.mlp_w1), copy_leaf(b.mlp_b1), copy_leaf(b.mlp_w2),
                        copy_leaf(b.mlp_b2)});
  }
  p.norm_gamma = copy_leaf(norm_gamma);
  p.norm_beta = copy_leaf(norm_beta);
  p.head_w = copy_leaf(head_w);
  p.head_b = copy_leaf(head_b);
  return p;
}

void Parameters::assign_from(const Parameters& other) {
  auto dst = named();
  const auto src = other.named();
  if (dst.size() != src.size()) throw ContractError("parameters: layout mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].tensor.shape() != src[i].tensor.shape()) {
      throw ContractError("parameters: layout mismatch at " + dst[i].name);
    }
    auto out = dst[i].tensor.mutable_leaf_data();
    auto in = src[i].tensor.data();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

void Parameters::set_requires_grad(bool flag) {
  for (auto& nt : named()) nt.tensor.set_requires_grad(flag);
}

Parameters init_parameters(const ModelConfig& config) {
  config.validate();
  Rng rng = Rng(config.seed).split("init");
  auto normal = [&](ad::Shape shape, double std) {
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = rng.normal(0.0, std);
    return ad::Tensor(std::move(shape), std::move(v));
  };
  auto linear = [&](std::size_t in, std::size_t out) {
    return normal({in, out}, std::sqrt(2.0 / static_cast<double>(in + out)));
  };
  auto zeros = [](std::size_t n) { return ad::Tensor::zeros({n}); };
  auto ones = [](std::size_t n) { return ad::Tensor::full({n}, 1.0); };

  const std::size_t d = config.embed_dim;
  Parameters p;
  p.patch_w = linear(config.patch_dim(), d);
  p.patch_b = zeros(d);
  p.cls_token = normal({d}, 0.02);
  p.pos_embed = normal({config.num_tokens(), d}, 0.02);
  for (std::size_t i = 0; i < config.depth; ++i) {
    BlockParameters b;
    b.norm1_gamma = ones(d);
    b.norm1_beta = zeros(d);
    b.wq = linear(d, d);
    b.bq = zeros(d);
    b.wk = linear(d, d);
    b.bk = zeros(d);
    b.wv = linear(d, d);
    b.bv = zeros(d);
    b.wo = linear(d, d);
    b.bo = zeros(d);
    b.norm2_gamma = ones(d);
    b.norm2_beta = zeros(d);
    b.mlp_w1 = linear(d, config.mlp_dim);
    b.mlp_b1 = zeros(config.mlp_dim);
    b.mlp_w2 = linear(config.mlp_dim, d);
    b.mlp_b2 = zeros(d);
    p.blocks.push_back(std::move(b));
  }
  p.norm_gamma = ones(d);
  p.norm_beta = zeros(d);
  p.head_w = normal({d, config.num_classes}, 0.02);
  p.head_b = zeros(config.num_classes);
  return p;
}

std::span<const double> AttentionCapture::row(std::size_t block, std::size_t sample,
                                              std::size_t head) const {
  if (block >= attention.size() || sample >= batch || head >= heads) {
    throw ContractError("capture: row index out of range");
  }
  return std::span<const double>(attention[block]).subspan((sample * heads + head) * patches,
                                                           patches);
}

std::span<const double> AttentionCapture::token_features(std::size_t block,
                                                         std::size_t sample) const {
  if (block >= features.size() || sample >= batch) {
    throw ContractError("capture: feature index out of range");
  }
  return std::span<const double>(features[block]).subspan(sample * patches * width,
                                                          patches * width);
}

mask::SaliencyScore attention_score(const std::optional<AttentionCapture>& capture,
                                    std::size_t sample, AttentionReadout readout) {
  if (!capture) throw ContractError("attention_score: forward ran without capture");
  return attention_score(*capture, sample, readout);
}

mask::SaliencyScore attention_score(const AttentionCapture& cap, std::size_t sample,
                                    AttentionReadout readout) {
  const auto blocks = static_cast<int>(cap.attention.size());
  std::vector<int> use;
  if (readout.mean_over_blocks) {
    for (int b = 0; b < blocks; ++b) use.push_back(b);
  } else {
    const int b = readout.block < 0 ? blocks + readout.block : readout.block;
    if (b < 0 || b >= blocks) throw ContractError("attention_score: block index out of range");
    use.push_back(b);
  }
  mask::SaliencyScore score;
  score.provenance = mask::Provenance::attention;
  score.values.assign(cap.patches, 0.0);
  for (int b : use) {
    for (std::size_t h = 0; h < cap.heads; ++h) {
      auto r = cap.row(static_cast<std::size_t>(b), sample, h);
      for (std::size_t p = 0; p < cap.patches; ++p) score.values[p] += r[p];
    }
  }
  if (use.size() > 1) {
    for (auto& v : score.values) v /= static_cast<double>(use.size());
  }
  return score;
}

ad::Tensor patchify(const ad::Tensor& images, const ModelConfig& config) {
  const ad::Shape want_tail{config.channels, config.image_size, config.image_size};
  if (images.rank() != 4 || !std::equal(want_tail.begin(), want_tail.end(),
                                        images.shape().begin() + 1)) {
    throw DimensionError("vit: images " + ad::to_string(images.shape()) +
                         " do not match [B," + std::to_string(config.channels) + "," +
                         std::to_string(config.image_size) + "," +
                         std::to_string(config.image_size) + "]");
  }
  const std::size_t batch = images.dim(0);
  const std::size_t s = config.image_size;
  const std::size_t ps = config.patch_size;
  const std::size_t g = config.grid();
  const std::size_t pd = config.patch_dim();
  const std::size_t np = config.num_patches();
  auto in = images.data();
  std::vector<double> out(batch * np * pd);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t py = 0; py < g; ++py) {
      for (std::size_t px = 0; px < g; ++px) {
        double* dst = out.data() + (b * np + py * g + px) * pd;
        for (std::size_t c = 0; c < config.channels; ++c) {
          for (std::size_t y = 0; y < ps; ++y) {
            const double* src = in.data() + ((b * config.channels + c) * s + py * ps + y) * s + px * ps;
            double* row = dst + (c * ps + y) * ps;
            for (std::size_t x = 0; x < ps; ++x) row[x] = (src[x] - kPixelCenter) / kPixelSpread;
          }
        }
      }
    }
  }
  return ad::Tensor({batch, np, pd}, std::move(out));
}

VisionTransformer::VisionTransformer(ModelConfig config, Parameters params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  if (params_.blocks.size() != config_.depth) {
    throw ContractError("vit: parameter depth does not match config");
  }
}

VisionTransformer::VisionTransformer(const ModelConfig& config)
    : VisionTransformer(config, init_parameters(config)) {}

ForwardResult VisionTransformer::forward(const ad::Tensor& images, bool capture) const {
  using namespace ad;
  ++forward_passes_;
  const auto& c = config_;
  const auto& p = params_;
  const std::size_t batch = images.dim(0);
  const std::size_t d = c.embed_dim;
  const std::size_t tokens = c.num_tokens();
  const std::size_t np = c.num_patches();

  Tensor x = add_broadcast(matmul(patchify(images, c), p.patch_w), p.patch_b);
  x = add_broadcast(prepend_token(x, p.cls_token), p.pos_embed);

  ForwardResult result;
  AttentionCapture cap;
  if (capture) {
    cap.batch = batch;
    cap.heads = c.num_heads;
    cap.patches = np;
    cap.width = d;
  }
  for (const auto& blk : p.blocks) {
    Tensor h = layer_norm(x, blk.norm1_gamma, blk.norm1_beta, c.norm_eps);
    Tensor q = add_broadcast(matmul(h, blk.wq), blk.bq);
    Tensor k = add_broadcast(matmul(h, blk.wk), blk.bk);
    Tensor v = add_broadcast(matmul(h, blk.wv), blk.bv);
    auto att = multi_head_attention(q, k, v, c.num_heads);
    x = add(x, add_broadcast(matmul(att.out, blk.wo), blk.bo));
    Tensor h2 = layer_norm(x, blk.norm2_gamma, blk.norm2_beta, c.norm_eps);
    Tensor m = gelu(add_broadcast(matmul(h2, blk.mlp_w1), blk.mlp_b1));
    x = add(x, add_broadcast(matmul(m, blk.mlp_w2), blk.mlp_b2));

    if (capture) {
      // Softmax of the class query over image keys only (key 0 is the class token).
      std::vector<double> rows(batch * c.num_heads * np);
      for (std::size_t bh = 0; bh < batch * c.num_heads; ++bh) {
        const double* s = att.first_query_scores.data() + bh * tokens + 1;
        double* r = rows.data() + bh * np;
        const double mx = *std::max_element(s, s + np);
        double z = 0.0;
        for (std::size_t j = 0; j < np; ++j) {
          r[j] = std::exp(s[j] - mx);
          z += r[j];
        }
        for (std::size_t j = 0; j < np; ++j) r[j] /= z;
      }
      cap.attention.push_back(std::move(rows));
      std::vector<double> feats(batch * np * d);
      for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(x.data().data() + (b * tokens + 1) * d, np * d, feats.data() + b * np * d);
      }
      cap.features.push_back(std::move(feats));
    }
  }
  // Per-token normalization, so normalizing only the class token is equivalent.
  Tensor cls = reshape(slice(x, 1, 0, 1), {batch, d});
  cls = layer_norm(cls, p.norm_gamma, p.norm_beta, c.norm_eps);
  result.logits = add_broadcast(matmul(cls, p.head_w), p.head_b);
  if (capture) result.capture = std::move(cap);
  return result;
}

}  // namespace rem::vit
