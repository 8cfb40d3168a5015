#include "rem/losses/losses.hpp"

#include <cmath>
#include <string>

#include "rem/autodiff/ops.hpp"
#include "rem/common/error.hpp"

namespace rem::loss {

namespace {

void check_chain(const std::vector<ProbBatch>& chain, const char* who) {
  if (chain.size() < 2) {
    throw ContractError(std::string(who) + ": needs at least 2 chain positions, got " +
                        std::to_string(chain.size()));
  }
  const ad::Shape& shape = chain.front().probs.shape();
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (chain[i].probs.shape() != shape) {
      throw DimensionError(std::string(who) + ": chain shapes differ");
    }
    if (i > 0 && chain[i].ratio < chain[i - 1].ratio) {
      throw ContractError(std::string(who) + ": chain ratios must be non-decreasing");
    }
  }
}

// mean_b(w_b * term_b), also folding the weighted terms into `per_sample`.
ad::Tensor weighted_mean(const ad::Tensor& term, SampleWeights weights,
                         std::vector<double>& per_sample) {
  const std::size_t b = term.dim(0);
  per_sample.resize(b, 0.0);
  ad::Tensor weighted = term;
  if (!weights.empty()) {
    if (weights.size() != b) {
      throw DimensionError("sample weights: expected " + std::to_string(b) + ", got " +
                           std::to_string(weights.size()));
    }
    weighted = ad::mul(term, ad::Tensor({b}, {weights.begin(), weights.end()}));
  }
  for (std::size_t i = 0; i < b; ++i) per_sample[i] += weighted[i];
  return ad::mean(weighted);
}

}  // namespace

ProbBatch ProbBatch::from_logits(const ad::Tensor& logits, double ratio) {
  if (logits.rank() != 2) {
    throw DimensionError("ProbBatch: logits must be [B, C], got " + ad::to_string(logits.shape()));
  }
  return ProbBatch{ad::softmax(logits, 1), ratio};
}

ad::Tensor entropy(const ProbBatch& p) {
  if (p.probs.rank() != 2) throw DimensionError("entropy: expected [B, C]");
  return ad::scale(ad::sum(ad::mul(p.probs, ad::log(p.probs)), 1), -1.0);
}

std::vector<double> entropy_values(const ProbBatch& p) {
  const std::size_t b = p.batch(), c = p.classes();
  auto v = p.probs.data();
  std::vector<double> out(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double q = v[i * c + k];
      s -= q * std::log(std::max(q, ad::kLogClamp));
    }
    out[i] = s;
  }
  return out;
}

LossValue em_loss(const ProbBatch& p, SampleWeights weights) {
  LossValue out;
  out.value = weighted_mean(entropy(p), weights, out.per_sample);
  return out;
}

std::vector<double> entropy_grad_analytic(std::span<const double> logits, std::size_t batch,
                                          std::size_t classes) {
  if (logits.size() != batch * classes) {
    throw DimensionError("entropy_grad_analytic: logits size mismatch");
  }
  std::vector<double> grad(logits.size());
  std::vector<double> p(classes), logp(classes);
  for (std::size_t i = 0; i < batch; ++i) {
    const double* z = logits.data() + i * classes;
    double zmax = z[0];
    for (std::size_t k = 1; k < classes; ++k) zmax = std::max(zmax, z[k]);
    double denom = 0.0;
    for (std::size_t k = 0; k < classes; ++k) denom += std::exp(z[k] - zmax);
    const double log_denom = std::log(denom);
    double s = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      logp[k] = z[k] - zmax - log_denom;
      p[k] = std::exp(logp[k]);
      s -= p[k] * logp[k];
    }
    for (std::size_t k = 0; k < classes; ++k) grad[i * classes + k] = -p[k] * (logp[k] + s);
  }
  return grad;
}

LossValue mcl(const std::vector<ProbBatch>& chain, SampleWeights weights) {
  check_chain(chain, "mcl");
  LossValue out;
  ad::Tensor total;
  std::vector<ad::Tensor> log_probs(chain.size());
  for (std::size_t j = 1; j < chain.size(); ++j) log_probs[j] = ad::log(chain[j].probs);
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const ad::Tensor target = ad::stop_gradient(chain[i].probs);
    for (std::size_t j = i + 1; j < chain.size(); ++j) {
      ad::Tensor term = ad::scale(ad::sum(ad::mul(target, log_probs[j]), 1), -1.0);
      ad::Tensor pair = weighted_mean(term, weights, out.per_sample);
      total = total.defined() ? ad::add(total, pair) : pair;
    }
  }
  out.value = total;
  return out;
}

LossValue erl(const std::vector<ProbBatch>& chain, double margin, SampleWeights weights) {
  check_chain(chain, "erl");
  if (!(margin >= 0.0)) throw ContractError("erl: margin must be >= 0");
  LossValue out;
  std::vector<ad::Tensor> s(chain.size()), s_frozen(chain.size());
  for (std::size_t i = 0; i < chain.size(); ++i) {
    s[i] = entropy(chain[i]);
    s_frozen[i] = ad::stop_gradient(s[i]);
  }
  ad::Tensor total;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    for (std::size_t j = i + 1; j < chain.size(); ++j) {
      ad::Tensor hinge = ad::relu(ad::add_scalar(ad::sub(s[i], s_frozen[j]), margin));
      ad::Tensor pair = weighted_mean(hinge, weights, out.per_sample);
      total = total.defined() ? ad::add(total, pair) : pair;
    }
  }
  out.value = total;
  return out;
}

RemLoss rem_total(const std::vector<ProbBatch>& chain, double lambda, double margin,
                  SampleWeights weights) {
  RemLoss out;
  out.mcl = mcl(chain, weights);
  out.erl = erl(chain, margin, weights);
  out.total.value = ad::add(out.mcl.value, ad::scale(out.erl.value, lambda));
  out.total.per_sample.resize(out.mcl.per_sample.size());
  for (std::size_t b = 0; b < out.total.per_sample.size(); ++b) {
    out.total.per_sample[b] = out.mcl.per_sample[b] + lambda * out.erl.per_sample[b];
  }
  return out;
}

}  // namespace rem::loss
