#pragma once

#include <string>
#include <string_view>

#include "liquiform/tensor.hpp"

namespace liquiform {

// --- Convolution -----------------------------------------------------------

// Cross-correlation (no kernel flip).
//   input  [N, C, H, W], weight [F, C, kH, kW], bias [F] (may be undefined)
//   output [N, F, (H + 2p - kH) / s + 1, (W + 2p - kW) / s + 1]
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

// Adjoint of conv2d with respect to its input.
//   input  [N, Cin, H, W], weight [Cin, Cout, kH, kW], bias [Cout]
//   output [N, Cout, (H - 1) * s - 2p + kH + output_padding, ...]
// output_padding (0 or 1, < stride) adds the trailing row/column that a
// stride-2 reduction of an even extent discards.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           int stride = 1, int padding = 0, int output_padding = 0);

// --- Normalization ---------------------------------------------------------

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
struct BatchNormState {
  BatchNormState() = default;
  explicit BatchNormState(Index channels)
      : running_mean(Shape{channels}, T{0}), running_var(Shape{channels}, T{1}) {}

  Tensor<T> running_mean;
  Tensor<T> running_var;
};

// Per-channel normalization over (N, H, W). Train mode uses batch moments and
// updates the running moments by exponential moving average (unbiased
// variance); eval mode uses the running moments.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, Mode mode, double eps = kBatchNormEps,
                     double momentum = kBatchNormMomentum);

// --- Activations -----------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// slope holds one learnable coefficient per channel (axis 1).
template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double negative_slope = 0.2);

// Saturates at the representable values nearest 0 and 1, so outputs stay
// strictly inside (0, 1).
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

// --- Resampling ------------------------------------------------------------

// Corner-aligned bilinear interpolation, [N, C, H, W] -> [N, C, fH, fW].
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int factor = 2);

// --- Dense -----------------------------------------------------------------

// input [N, D], weight [D, E], bias [E] -> [N, E]
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

// --- Structural and elementwise -------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor);

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, double lo, double hi);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// [N, ...] -> [N, prod(...)]
template <typename T>
Tensor<T> flatten(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

namespace testing {

// Makes the backward pass of the named operator scale the gradient it
// propagates by (1 + 1e-2). Used to prove that the self-check catches
// broken derivatives. Pass an empty name to clear.
void inject_gradient_fault(std::string op);
bool gradient_fault_active(std::string_view op);

}  // namespace testing

}  // namespace liquiform
