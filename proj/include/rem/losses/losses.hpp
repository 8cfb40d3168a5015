#pragma once

#include <span>
#include <vector>

#include "rem/autodiff/tensor.hpp"

namespace rem::loss {

// Softmax probabilities of one chain position, still attached to the logits.
struct ProbBatch {
  ad::Tensor probs;  // [B, C]
  double ratio = 0.0;

  static ProbBatch from_logits(const ad::Tensor& logits, double ratio = 0.0);
  std::size_t batch() const { return probs.dim(0); }
  std::size_t classes() const { return probs.dim(1); }
};

struct LossValue {
  ad::Tensor value;                // scalar, on the tape
  std::vector<double> per_sample;  // weighted per-sample contribution before the batch mean

  double item() const { return value.item(); }
};

// Empty weights mean every sample counts with weight 1.
using SampleWeights = std::span<const double>;

// Per-sample Shannon entropy [B], on the tape.
ad::Tensor entropy(const ProbBatch& p);
std::vector<double> entropy_values(const ProbBatch& p);

LossValue em_loss(const ProbBatch& p, SampleWeights weights = {});

// dS/dz for S = entropy(softmax(z)), row-wise over [B, C] logits.
std::vector<double> entropy_grad_analytic(std::span<const double> logits, std::size_t batch,
                                          std::size_t classes);

// Pairs i < j: cross-entropy of the more-masked prediction j against the
// frozen less-masked prediction i.
LossValue mcl(const std::vector<ProbBatch>& chain, SampleWeights weights = {});

// Pairs i < j: hinge max(0, S_i - sg(S_j) + margin) per sample.
LossValue erl(const std::vector<ProbBatch>& chain, double margin, SampleWeights weights = {});

struct RemLoss {
  LossValue total;
  LossValue mcl;
  LossValue erl;
};

RemLoss rem_total(const std::vector<ProbBatch>& chain, double lambda, double margin,
                  SampleWeights weights = {});

}  // namespace rem::loss
