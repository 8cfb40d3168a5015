#include "rem/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rem/common/error.hpp"
#include "rem/kernels/gemm.hpp"

namespace rem::ad {
namespace {

using detail::Node;
using kernels::Trans;

Tensor make_op(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
               std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->id = detail::next_node_id();
  node->shape = std::move(shape);
  node->value = std::move(value);
  for (const auto& in : inputs) node->requires_grad |= in.requires_grad();
  if (node->requires_grad) {
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward_fn);
  }
  return Tensor::from_node(std::move(node));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

void require_finite(const char* op, std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " invalid for shape " + to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_op(x.shape(), std::move(out), {x}, [deriv](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  const std::size_t m = a.numel() / k;
  Shape shape = a.shape();
  shape.back() = n;
  std::vector<double> out(m * n);
  kernels::gemm(Trans::no, Trans::no, m, n, k, 1.0, a.data().data(), k, b.data().data(),
                n, 0.0, out.data(), n);
  return make_op(std::move(shape), std::move(out), {a, b}, [m, n, k](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      kernels::gemm(Trans::no, Trans::yes, m, k, n, 1.0, self.grad.data(), n,
                    pb.value.data(), n, 1.0, pa.grad_buffer().data(), k);
    }
    if (pb.requires_grad) {
      kernels::gemm(Trans::yes, Trans::no, k, n, m, 1.0, pa.value.data(), k,
                    self.grad.data(), n, 1.0, pb.grad_buffer().data(), n);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    auto& pb = *self.parents[1];
    if (!pb.requires_grad) return;
    auto g = pb.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor add_broadcast(const Tensor& x, const Tensor& y) {
  const auto& xs = x.shape();
  const auto& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    throw DimensionError("add_broadcast: " + to_string(ys) + " is not a trailing shape of " +
                         to_string(xs));
  }
  const std::size_t inner = y.numel();
  const std::size_t outer = inner == 0 ? 0 : x.numel() / inner;
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto yv = y.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += yv[i];
  }
  return make_op(xs, std::move(out), {x, y}, [outer, inner](Node& self) {
    self.parents[0]->accumulate(self.grad);
    auto& py = *self.parents[1];
    if (!py.requires_grad) return;
    auto g = py.grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) g[i] += self.grad[o * inner + i];
    }
  });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double out) { return out; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(std::max(v, kLogClamp)); },
      [](double in, double) { return in > kLogClamp ? 1.0 / in : 0.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double a = 0.044715;
  return unary(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(c * (v + a * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v);
      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op({}, {s}, {x}, [](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (auto& g : p.grad_buffer()) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum(const Tensor& x, std::size_t axis) {
  const auto s = split_at(x.shape(), axis, "sum");
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const double* row = in.data() + (o * s.len + l) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += row[i];
    }
  }
  return make_op(std::move(shape), std::move(out), {x}, [s](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto g = p.grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.len; ++l) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          g[(o * s.len + l) * s.inner + i] += self.grad[o * s.inner + i];
        }
      }
    }
  });
}

Tensor mean(const Tensor& x, std::size_t axis) {
  const auto len = x.dim(axis);
  if (len == 0) throw DimensionError("mean: empty axis");
  return scale(sum(x, axis), 1.0 / static_cast<double>(len));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape shape = parts.front().shape();
  const auto base = split_at(shape, axis, "concat");
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != shape.size()) {
      throw DimensionError("concat: rank mismatch " + to_string(probe) + " vs " +
                           to_string(shape));
    }
    probe[axis] = shape[axis];
    if (probe != shape) {
      throw DimensionError("concat: shape mismatch " + to_string(p.shape()) + " vs " +
                           to_string(shape));
    }
    lens.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  shape[axis] = total;
  std::vector<double> out(base.outer * total * base.inner);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto in = parts[k].data();
    const std::size_t chunk = lens[k] * base.inner;
    for (std::size_t o = 0; o < base.outer; ++o) {
      std::copy_n(in.data() + o * chunk, chunk,
                  out.data() + o * total * base.inner + offset * base.inner);
    }
    offset += lens[k];
  }

  auto node = std::make_shared<Node>();
  node->id = detail::next_node_id();
  node->shape = std::move(shape);
  node->value = std::move(out);
  for (const auto& p : parts) node->requires_grad |= p.requires_grad();
  if (node->requires_grad) {
    for (const auto& p : parts) node->parents.push_back(p.node());
    node->backward = [lens, total, inner = base.inner, outer = base.outer](Node& self) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < lens.size(); ++k) {
        auto& p = *self.parents[k];
        const std::size_t chunk = lens[k] * inner;
        if (p.requires_grad) {
          auto g = p.grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = self.grad.data() + o * total * inner + offset * inner;
            for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
          }
        }
        offset += lens[k];
      }
    };
  }
  return Tensor::from_node(std::move(node));
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto s = split_at(x.shape(), axis, "slice");
  if (begin > end || end > s.len) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for axis of length " +
                         std::to_string(s.len));
  }
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  std::vector<double> out(s.outer * chunk);
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(in.data() + (o * s.len + begin) * s.inner, chunk, out.data() + o * chunk);
  }
  return make_op(std::move(shape), std::move(out), {x}, [s, begin, chunk](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto g = p.grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = g.data() + (o * s.len + begin) * s.inner;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += self.grad[o * chunk + i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op(std::move(shape), std::move(out), {x},
                 [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto s = split_at(x.shape(), axis, "softmax");
  require_finite("softmax", x.data());
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -INFINITY;
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, in[base + l * s.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double e = std::exp(in[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= z;
    }
  }
  return make_op(x.shape(), std::move(out), {x}, [s](Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto g = p.grad_buffer();
    const auto& y = self.value;
    const auto& dy = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) {
          dot += dy[base + l * s.inner] * y[base + l * s.inner];
        }
        for (std::size_t l = 0; l < s.len; ++l) {
          const auto idx = base + l * s.inner;
          g[idx] += y[idx] * (dy[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError("layer_norm: zero-length feature axis in " + to_string(x.shape()));
  }
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma " + to_string(gamma.shape()) + " / beta " +
                         to_string(beta.shape()) + " must match feature size " +
                         std::to_string(d));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  auto in = x.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  std::vector<double> xhat(in.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gm[j] + bt[j];
    }
  }
  return make_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& dy = self.grad;
        if (pg.requires_grad) {
          auto g = pg.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[r * d + j] * xhat[r * d + j];
          }
        }
        if (pb.requires_grad) {
          auto g = pb.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) g[j] += dy[r * d + j];
          }
        }
        if (px.requires_grad) {
          auto g = px.grad_buffer();
          const auto& gm = pg.value;
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0;
            double m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = dy[r * d + j] * gm[j];
              m1 += dh;
              m2 += dh * xhat[r * d + j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = dy[r * d + j] * gm[j];
              g[r * d + j] += inv_std[r] * (dh - m1 - xhat[r * d + j] * m2);
            }
          }
        }
      });
}

Tensor stop_gradient(const Tensor& x) {
  return Tensor(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), false);
}

Tensor prepend_token(const Tensor& x, const Tensor& token) {
  if (x.rank() != 3 || token.shape() != Shape{x.dim(2)}) {
    throw DimensionError("prepend_token: x " + to_string(x.shape()) + ", token " +
                         to_string(token.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t tokens = x.dim(1);
  const std::size_t d = x.dim(2);
  std::vector<double> out(batch * (tokens + 1) * d);
  for (std::size_t b = 0; b < batch; ++b) {
    double* dst = out.data() + b * (tokens + 1) * d;
    std::copy_n(token.data().data(), d, dst);
    std::copy_n(x.data().data() + b * tokens * d, tokens * d, dst + d);
  }
  return make_op({batch, tokens + 1, d}, std::move(out), {x, token},
                 [batch, tokens, d](Node& self) {
                   auto& px = *self.parents[0];
                   auto& pt = *self.parents[1];
                   for (std::size_t b = 0; b < batch; ++b) {
                     const double* src = self.grad.data() + b * (tokens + 1) * d;
                     if (pt.requires_grad) {
                       auto g = pt.grad_buffer();
                       for (std::size_t j = 0; j < d; ++j) g[j] += src[j];
                     }
                     if (px.requires_grad) {
                       auto g = px.grad_buffer();
                       double* dst = g.data() + b * tokens * d;
                       for (std::size_t j = 0; j < tokens * d; ++j) dst[j] += src[d + j];
                     }
                   }
                 });
}

AttentionOutput multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     std::size_t heads) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("attention: q/k/v shapes " + to_string(q.shape()) + " " +
                         to_string(k.shape()) + " " + to_string(v.shape()));
  }
  const std::size_t batch = q.dim(0);
  const std::size_t tokens = q.dim(1);
  const std::size_t d = q.dim(2);
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t hd = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
  const std::size_t tt = tokens * tokens;

  std::vector<double> probs(batch * heads * tt);
  std::vector<double> out(batch * tokens * d);
  std::vector<double> first_scores(batch * heads * tokens);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t off = b * tokens * d;
    for (std::size_t h = 0; h < heads; ++h) {
      double* p = probs.data() + (b * heads + h) * tt;
      kernels::gemm(Trans::no, Trans::yes, tokens, tokens, hd, sc, q.data().data() + off + h * hd,
                    d, k.data().data() + off + h * hd, d, 0.0, p, tokens);
      std::copy_n(p, tokens, first_scores.data() + (b * heads + h) * tokens);
      for (std::size_t i = 0; i < tokens; ++i) {
        double* row = p + i * tokens;
        const double mx = *std::max_element(row, row + tokens);
        double z = 0.0;
        for (std::size_t j = 0; j < tokens; ++j) {
          row[j] = std::exp(row[j] - mx);
          z += row[j];
        }
        for (std::size_t j = 0; j < tokens; ++j) row[j] /= z;
      }
      kernels::gemm(Trans::no, Trans::no, tokens, hd, tokens, 1.0, p, tokens,
                    v.data().data() + off + h * hd, d, 0.0, out.data() + off + h * hd, d);
    }
  }

  Tensor result = make_op(
      q.shape(), std::move(out), {q, k, v},
      [probs = std::move(probs), batch, tokens, d, heads, hd, sc, tt](Node& self) {
        auto& pq = *self.parents[0];
        auto& pk = *self.parents[1];
        auto& pv = *self.parents[2];
        std::vector<double> dp(tt);
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t off = b * tokens * d;
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs.data() + (b * heads + h) * tt;
            const double* dout = self.grad.data() + off + h * hd;
            if (pv.requires_grad) {
              kernels::gemm(Trans::yes, Trans::no, tokens, hd, tokens, 1.0, p, tokens, dout,
                            d, 1.0, pv.grad_buffer().data() + off + h * hd, d);
            }
            if (!pq.requires_grad && !pk.requires_grad) continue;
            kernels::gemm(Trans::no, Trans::yes, tokens, tokens, hd, 1.0, dout, d,
                          pv.value.data() + off + h * hd, d, 0.0, dp.data(), tokens);
            for (std::size_t i = 0; i < tokens; ++i) {
              double* drow = dp.data() + i * tokens;
              const double* prow = p + i * tokens;
              double s = 0.0;
              for (std::size_t j = 0; j < tokens; ++j) s += drow[j] * prow[j];
              for (std::size_t j = 0; j < tokens; ++j) drow[j] = prow[j] * (drow[j] - s);
            }
            if (pq.requires_grad) {
              kernels::gemm(Trans::no, Trans::no, tokens, hd, tokens, sc, dp.data(), tokens,
                            pk.value.data() + off + h * hd, d, 1.0,
                            pq.grad_buffer().data() + off + h * hd, d);
            }
            if (pk.requires_grad) {
              kernels::gemm(Trans::yes, Trans::no, tokens, hd, tokens, sc, dp.data(), tokens,
                            pq.value.data() + off + h * hd, d, 1.0,
                            pk.grad_buffer().data() + off + h * hd, d);
            }
          }
        }
      });
  return AttentionOutput{std::move(result), std::move(first_scores)};
}

}  // namespace rem::ad
