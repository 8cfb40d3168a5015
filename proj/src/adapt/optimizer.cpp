#include "rem/adapt/optimizer.hpp"

#include <cmath>
#include <string>

#include "rem/common/error.hpp"

namespace rem::adapt {

std::string_view optimizer_name(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(std::vector<ad::Tensor> params, OptimizerSettings settings)
    : params_(std::move(params)), settings_(settings) {
  if (!(settings_.learning_rate >= 0.0)) throw ConfigError("optimizer: negative learning rate");
  for (const auto& p : params_) {
    if (!p.is_leaf()) throw ContractError("optimizer: parameters must be leaves");
  }
  reset();
}

void Optimizer::reset() {
  state_ = OptimizerState{};
  for (const auto& p : params_) {
    state_.first.emplace_back(p.numel(), 0.0);
    if (settings_.kind == OptimizerKind::adam) state_.second.emplace_back(p.numel(), 0.0);
  }
}

void Optimizer::set_state(OptimizerState state) {
  if (state.first.size() != params_.size()) {
    throw ContractError("optimizer: state does not match parameter list");
  }
  state_ = std::move(state);
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::step() {
  ++state_.step;
  const double lr = settings_.learning_rate;
  if (settings_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto g = params_[i].grad();
      auto w = params_[i].mutable_leaf_data();
      auto& vel = state_.first[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g.empty() ? 0.0 : g[j];
        vel[j] = settings_.momentum * vel[j] + gj;
        w[j] -= lr * vel[j];
      }
    }
    return;
  }
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto g = params_[i].grad();
    auto w = params_[i].mutable_leaf_data();
    auto& m = state_.first[i];
    auto& v = state_.second[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + settings_.epsilon);
    }
  }
}

}  // namespace rem::adapt
