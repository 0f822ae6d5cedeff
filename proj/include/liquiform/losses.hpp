#pragma once

#include "liquiform/tensor.hpp"

namespace liquiform {

// Scores below this are clamped before taking the log.
inline constexpr double kScoreFloor = 1e-8;

// Pixel-wise MSE averaged over channels, pixels and batch items:
//   (1/N) * sum_i ||target_i - pred_i||^2 / (C*H*W)
template <typename T>
Tensor<T> content_loss(const Tensor<T>& pred, const Tensor<T>& target);

// Generator objective, (1/N) * sum_i -log D(G(z_i)). Scores must lie in [0, 1].
template <typename T>
Tensor<T> adversarial_loss(const Tensor<T>& fake_scores);

// Discriminator objective (the minimax ascent negated for minimization):
//   -(1/N) * sum_i [log D(real_i) + log(1 - D(fake_i))]
template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores);

// content_weight * mse + lambda * adv. Zero weights drop the term from the
// graph entirely, so it cannot reach any parameter.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& mse, const Tensor<T>& adv, double lambda_adv,
                     double content_weight = 1.0);

}  // namespace liquiform
