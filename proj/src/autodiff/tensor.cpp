#include "rem/autodiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rem/common/error.hpp"

namespace rem::ad {

std::size_t numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

std::uint64_t next_node_id() noexcept {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

std::span<double> Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

void Node::accumulate(std::span<const double> g) {
  if (!requires_grad) return;
  auto buf = grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

}  // namespace detail

namespace {

thread_local std::uint64_t g_backward_calls = 0;

#if defined(__GLIBC__)
// Activation buffers are short-lived and often above glibc's mmap threshold;
// serving them from the heap avoids a page-fault storm on every forward pass.
[[maybe_unused]] const bool g_malloc_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  return true;
}();
#endif

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ContractError("tensor: use of undefined tensor");
  return *node;
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (ad::numel(shape) != data.size()) {
    throw DimensionError("tensor: shape " + to_string(shape) + " holds " +
                         std::to_string(ad::numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  node_ = std::make_shared<detail::Node>();
  node_->id = detail::next_node_id();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for " +
                         to_string(s));
  }
  return s[axis];
}

std::span<const double> Tensor::data() const { return checked(node_).value; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("tensor: item() on " + to_string(shape()));
  return data()[0];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }
bool Tensor::is_leaf() const { return checked(node_).parents.empty(); }
std::uint64_t Tensor::id() const { return checked(node_).id; }

std::span<const double> Tensor::grad() const { return checked(node_).grad; }

void Tensor::zero_grad() {
  checked(node_);
  node_->grad.clear();
}

std::span<double> Tensor::mutable_leaf_data() {
  if (!is_leaf()) throw ContractError("tensor: only leaves may be mutated");
  return node_->value;
}

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("tensor: requires_grad is fixed on interior nodes");
  node_->requires_grad = flag;
}

namespace {

using NodePtr = std::shared_ptr<detail::Node>;

// Participating nodes, children before parents.
std::vector<NodePtr> reachable(const Tensor& root) {
  std::vector<NodePtr> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<NodePtr> stack{root.node()};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n.get()).second) continue;
    for (const auto& p : n->parents) stack.push_back(p);
    order.push_back(std::move(n));
  }
  std::sort(order.begin(), order.end(),
            [](const NodePtr& a, const NodePtr& b) { return a->id > b->id; });
  return order;
}

}  // namespace

std::vector<Tensor> backward(const Tensor& root) {
  if (!root.defined()) throw ContractError("backward: undefined root");
  if (root.numel() != 1) {
    throw ContractError("backward: root must be scalar, got shape " +
                        to_string(root.shape()));
  }
  ++g_backward_calls;
  std::vector<Tensor> leaves;
  if (!root.requires_grad()) return leaves;

  const auto order = reachable(root);
  const double one = 1.0;
  root.node()->accumulate(std::span<const double>(&one, 1));
  for (const auto& n : order) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->parents.empty()) leaves.push_back(Tensor::from_node(*it));
  }
  return leaves;
}

void zero_grad(const Tensor& root) {
  if (!root.defined()) return;
  for (const auto& n : reachable(root)) n->grad.clear();
}

std::uint64_t backward_calls() noexcept { return g_backward_calls; }

}  // namespace rem::ad
