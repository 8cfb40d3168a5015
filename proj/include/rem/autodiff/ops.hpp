#pragma once

#include <cstddef>
#include <vector>

#include "rem/autodiff/tensor.hpp"

namespace rem::ad {

inline constexpr double kLogClamp = 1e-12;

// a[..., k] x b[k, n] -> [..., n]; leading axes of a are flattened.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

// x[..., trailing] + y[trailing]; y broadcast over the leading axes of x.
Tensor add_broadcast(const Tensor& x, const Tensor& y);

Tensor exp(const Tensor& x);
// log(max(x, kLogClamp)); the clamp passes no gradient below the threshold.
Tensor log(const Tensor& x);
Tensor relu(const Tensor& x);
// tanh approximation.
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

Tensor softmax(const Tensor& x, std::size_t axis);
// Normalizes over the last axis; gamma and beta have that axis' length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// Same value, severed from the tape.
Tensor stop_gradient(const Tensor& x);

// [batch, tokens, d] -> [batch, tokens + 1, d] with token[d] placed at index 0.
Tensor prepend_token(const Tensor& x, const Tensor& token);

struct AttentionOutput {
  Tensor out;  // [batch, tokens, d]
  // Scaled scores q_0 . k_j / sqrt(head_dim) of the first (class) query against
  // every key, [batch, heads, tokens]. Values only.
  std::vector<double> first_query_scores;
};

// Scaled dot-product attention over `heads` column groups of q, k, v, each
// [batch, tokens, d].
AttentionOutput multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::size_t heads);

}  // namespace rem::ad
