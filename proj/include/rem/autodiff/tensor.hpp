#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rem::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

namespace detail {

// One tape entry. Ids grow monotonically, so parents always carry smaller ids
// than their children and sorting by id yields a topological order.
struct Node {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // grad += g, allocating on first use. No-op when !requires_grad.
  void accumulate(std::span<const double> g);
  std::span<double> grad_buffer();
};

std::uint64_t next_node_id() noexcept;

}  // namespace detail

// Shared handle to an immutable value that may participate in the tape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const double> data() const;
  double item() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  bool is_leaf() const;
  std::uint64_t id() const;

  // Gradient accumulated by backward(); empty span if none reached this tensor.
  std::span<const double> grad() const;
  bool has_grad() const { return !grad().empty(); }
  void zero_grad();

  // Leaf-only mutation, for optimizers and checkpoint loading.
  std::span<double> mutable_leaf_data();
  void set_requires_grad(bool flag);

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a scalar root. Gradients accumulate into every
// requires_grad tensor reachable from root; the tape is left intact, so a
// second sweep after zero_grad() reproduces the same gradients bitwise.
// Returns the participating leaves in creation order.
std::vector<Tensor> backward(const Tensor& root);

// Clears gradients on every tensor reachable from root.
void zero_grad(const Tensor& root);

// Number of backward() sweeps executed on this thread.
std::uint64_t backward_calls() noexcept;

}  // namespace rem::ad
