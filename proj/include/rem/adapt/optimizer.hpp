#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "rem/autodiff/tensor.hpp"

namespace rem::adapt {

enum class OptimizerKind { adam, sgd };

std::string_view optimizer_name(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;  // sgd
};

// Adam keeps both moments; sgd uses `first` as its velocity.
struct OptimizerState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t step = 0;

  bool operator==(const OptimizerState&) const = default;
};

// Updates a fixed list of leaf tensors from their accumulated gradients.
// Tensors without a gradient are treated as having a zero gradient.
class Optimizer {
 public:
  Optimizer(std::vector<ad::Tensor> params, OptimizerSettings settings);

  void step();
  void zero_grad();
  void reset();  // back to freshly constructed state

  const OptimizerSettings& settings() const noexcept { return settings_; }
  const OptimizerState& state() const noexcept { return state_; }
  void set_state(OptimizerState state);
  void set_learning_rate(double lr) noexcept { settings_.learning_rate = lr; }
  const std::vector<ad::Tensor>& params() const noexcept { return params_; }

 private:
  std::vector<ad::Tensor> params_;
  OptimizerSettings settings_;
  OptimizerState state_;
};

}  // namespace rem::adapt
