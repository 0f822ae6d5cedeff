#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "liquiform/tensor.hpp"

namespace liquiform {

// Max-norm relative error between the analytic gradient of loss_fn and a
// central finite difference, over every element of every tensor in wrt:
//   max|analytic - numeric| / max(max|analytic|, max|numeric|)
// loss_fn must rebuild its graph on each call from the current contents of
// the tensors in wrt.
template <typename T>
double gradient_relative_error(const std::function<Tensor<T>()>& loss_fn,
                               std::vector<Tensor<T>> wrt, double step);

// Same comparison restricted to selected flat element indices of one tensor.
template <typename T>
double gradient_relative_error_at(const std::function<Tensor<T>()>& loss_fn, Tensor<T> param,
                                  const std::vector<Index>& elements, double step);

// Same comparison over (tensor, flat element) picks that may span tensors.
template <typename T>
double gradient_relative_error_at(const std::function<Tensor<T>()>& loss_fn,
                                  std::vector<std::pair<Tensor<T>, Index>> picks, double step);

struct GradCheckResult {
  std::string op;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Finite-difference check of every differentiable operator and loss on
// random inputs with all extents <= 5, in 64-bit arithmetic.
std::vector<GradCheckResult> operator_gradient_suite(std::uint64_t seed, double tolerance = 1e-4,
                                                     double step = 1e-3);

// 32-bit variant of the suite.
std::vector<GradCheckResult> operator_gradient_suite_f32(std::uint64_t seed, double tolerance = 1e-2,
                                                         double step = 1e-2);

}  // namespace liquiform
