#include "liquiform/optim.hpp"

#include <cmath>

#include "liquiform/error.hpp"

namespace liquiform {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ContractError("optimizer must be 'sgd' or 'adam', got '" + name + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

Optimizer::Optimizer(std::vector<Named<float>> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
    if (cfg_.kind == OptimizerKind::adam) v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), 0.0f);
  }
}

void Optimizer::load_state(const OptimizerState& state) {
  auto fits = [&](const std::vector<std::vector<float>>& buffers) {
    if (buffers.size() != params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (buffers[i].size() != static_cast<std::size_t>(params_[i].tensor.numel())) return false;
    }
    return true;
  };
  const bool adam = cfg_.kind == OptimizerKind::adam;
  if (state.steps < 0 || !fits(state.m) || (adam ? !fits(state.v) : !state.v.empty())) {
    throw ContractError("optimizer state does not match the parameter list");
  }
  t_ = state.steps;
  m_ = state.m;
  v_ = state.v;
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Optimizer::step() {
  ++t_;
  const auto lr = static_cast<float>(cfg_.learning_rate);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<float>& p = params_[i].tensor;
    auto data = p.mutable_data();
    const bool has = p.has_grad();
    std::span<const float> g = p.grad();
    auto& m = m_[i];
    if (cfg_.kind == OptimizerKind::sgd) {
      const auto mu = static_cast<float>(cfg_.momentum);
      for (std::size_t j = 0; j < data.size(); ++j) {
        m[j] = mu * m[j] + (has ? g[j] : 0.0f);
        data[j] -= lr * m[j];
      }
    } else {
      auto& v = v_[i];
      const double b1 = cfg_.beta1, b2 = cfg_.beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
      for (std::size_t j = 0; j < data.size(); ++j) {
        const float gj = has ? g[j] : 0.0f;
        m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * gj);
        v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * gj * gj);
        data[j] -= static_cast<float>(cfg_.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.epsilon));
      }
    }
  }
}

}  // namespace liquiform
