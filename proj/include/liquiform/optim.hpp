#pragma once

#include <string>
#include <vector>

#include "liquiform/models.hpp"

namespace liquiform {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.01;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment buffers and step count, enough to continue an interrupted run exactly.
struct OptimizerState {
  long steps = 0;
  std::vector<std::vector<float>> m, v;  // v is empty for sgd
};

// Updates a fixed parameter list from its accumulated gradients.
// sgd:  v = momentum * v + g;  p -= lr * v
// adam: bias-corrected first and second moments.
// A parameter without a gradient is treated as having gradient zero.
class Optimizer {
 public:
  Optimizer(std::vector<Named<float>> params, OptimizerConfig cfg);

  void step();
  void zero_grad();
  const OptimizerConfig& config() const { return cfg_; }
  OptimizerState state() const { return {t_, m_, v_}; }
  // Throws ContractError when the buffers do not fit this parameter list.
  void load_state(const OptimizerState& state);

 private:
  std::vector<Named<float>> params_;
  OptimizerConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

}  // namespace liquiform
