#include "liquiform/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "liquiform/error.hpp"
#include "liquiform/losses.hpp"
#include "liquiform/ops.hpp"
#include "liquiform/rng.hpp"

namespace liquiform {

template <typename T>
double gradient_relative_error(const std::function<Tensor<T>()>& loss_fn, std::vector<Tensor<T>> wrt,
                               double step) {
  for (auto& t : wrt) {
    if (!t.requires_grad()) throw ContractError("gradient check: tensor does not require grad");
    t.zero_grad();
  }
  loss_fn().backward();

  double max_diff = 0.0, max_mag = 0.0;
  NoGradGuard no_grad;
  for (auto& t : wrt) {
    std::vector<T> analytic(t.data().size(), T{0});
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T original = values[i];
      const T plus = static_cast<T>(original + step);
      const T minus = static_cast<T>(original - step);
      values[i] = plus;
      const double lp = loss_fn().item();
      values[i] = minus;
      const double lm = loss_fn().item();
      values[i] = original;
      const double numeric = (lp - lm) / (static_cast<double>(plus) - static_cast<double>(minus));
      max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
      max_mag = std::max({max_mag, std::abs(numeric), std::abs(static_cast<double>(analytic[i]))});
    }
  }
  return max_mag > 0.0 ? max_diff / max_mag : max_diff;
}

template <typename T>
double gradient_relative_error_at(const std::function<Tensor<T>()>& loss_fn,
                                  std::vector<std::pair<Tensor<T>, Index>> picks, double step) {
  for (auto& [t, e] : picks) {
    if (!t.requires_grad()) throw ContractError("gradient check: tensor does not require grad");
    if (e < 0 || e >= t.numel()) throw ContractError("gradient check: element out of range");
    t.zero_grad();
  }
  loss_fn().backward();
  std::vector<double> analytic;
  for (auto& [t, e] : picks) {
    analytic.push_back(t.has_grad() ? static_cast<double>(t.grad()[static_cast<std::size_t>(e)]) : 0.0);
  }

  double max_diff = 0.0, max_mag = 0.0;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < picks.size(); ++k) {
    auto values = picks[k].first.mutable_data();
    const auto i = static_cast<std::size_t>(picks[k].second);
    const T original = values[i];
    const T plus = static_cast<T>(original + step);
    const T minus = static_cast<T>(original - step);
    values[i] = plus;
    const double lp = loss_fn().item();
    values[i] = minus;
    const double lm = loss_fn().item();
    values[i] = original;
    const double numeric = (lp - lm) / (static_cast<double>(plus) - static_cast<double>(minus));
    max_diff = std::max(max_diff, std::abs(numeric - analytic[k]));
    max_mag = std::max({max_mag, std::abs(numeric), std::abs(analytic[k])});
  }
  return max_mag > 0.0 ? max_diff / max_mag : max_diff;
}

template <typename T>
double gradient_relative_error_at(const std::function<Tensor<T>()>& loss_fn, Tensor<T> param,
                                  const std::vector<Index>& elements, double step) {
  std::vector<std::pair<Tensor<T>, Index>> picks;
  for (Index e : elements) picks.emplace_back(param, e);
  return gradient_relative_error_at(loss_fn, std::move(picks), step);
}

template double gradient_relative_error(const std::function<Tensor<float>()>&, std::vector<Tensor<float>>,
                                        double);
template double gradient_relative_error(const std::function<Tensor<double>()>&,
                                        std::vector<Tensor<double>>, double);
template double gradient_relative_error_at(const std::function<Tensor<float>()>&, Tensor<float>,
                                           const std::vector<Index>&, double);
template double gradient_relative_error_at(const std::function<Tensor<double>()>&, Tensor<double>,
                                           const std::vector<Index>&, double);

namespace {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo, double hi, bool grad = true) {
  std::vector<T> v(static_cast<std::size_t>(element_count(shape)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  Tensor<T> t(shape, std::move(v));
  t.set_requires_grad(grad);
  return t;
}

// Uniform in [lo, hi] but at least `margin` away from each point in `kinks`,
// so finite differences never straddle a non-differentiable point.
template <typename T>
Tensor<T> random_away_from(const Shape& shape, Rng& rng, double lo, double hi,
                           std::initializer_list<double> kinks, double margin) {
  std::vector<T> v(static_cast<std::size_t>(element_count(shape)));
  for (auto& x : v) {
    double d;
    bool ok;
    do {
      d = rng.uniform(lo, hi);
      ok = true;
      for (double k : kinks) ok = ok && std::abs(d - k) > margin;
    } while (!ok);
    x = static_cast<T>(d);
  }
  Tensor<T> t(shape, std::move(v));
  t.set_requires_grad(true);
  return t;
}

// Random linear functional of an operator output; turns any output into a
// scalar whose gradient exercises every output element independently.
template <typename T>
Tensor<T> project(const Tensor<T>& out, const Tensor<T>& weights) {
  return sum(mul(out, weights));
}

template <typename T>
std::vector<GradCheckResult> run_suite(std::uint64_t seed, double tolerance, double step) {
  Rng rng(seed);
  std::vector<GradCheckResult> results;
  const double margin = 5.0 * step;

  auto check = [&](std::string name, const Shape& out_shape,
                   const std::function<Tensor<T>()>& forward, std::vector<Tensor<T>> wrt) {
    Tensor<T> weights = random_tensor<T>(out_shape, rng, -1.0, 1.0, false);
    const double err =
        gradient_relative_error<T>([&] { return project(forward(), weights); }, std::move(wrt), step);
    results.push_back({std::move(name), err, err < tolerance});
  };
  auto check_scalar = [&](std::string name, const std::function<Tensor<T>()>& loss,
                          std::vector<Tensor<T>> wrt) {
    const double err = gradient_relative_error<T>(loss, std::move(wrt), step);
    results.push_back({std::move(name), err, err < tolerance});
  };

  {
    auto x = random_tensor<T>({2, 3, 5, 5}, rng, -1, 1);
    auto w = random_tensor<T>({4, 3, 3, 3}, rng, -1, 1);
    auto b = random_tensor<T>({4}, rng, -1, 1);
    check("conv2d", {2, 4, 5, 5}, [=] { return conv2d(x, w, b, 1, 1); }, {x, w, b});
  }
  {
    auto x = random_tensor<T>({1, 2, 5, 5}, rng, -1, 1);
    auto w = random_tensor<T>({3, 2, 3, 3}, rng, -1, 1);
    auto b = random_tensor<T>({3}, rng, -1, 1);
    check("conv2d_stride2", {1, 3, 2, 2}, [=] { return conv2d(x, w, b, 2, 0); }, {x, w, b});
  }
  {
    auto x = random_tensor<T>({2, 3, 3, 3}, rng, -1, 1);
    auto w = random_tensor<T>({3, 2, 3, 3}, rng, -1, 1);
    auto b = random_tensor<T>({2}, rng, -1, 1);
    check("conv2d_transpose", {2, 2, 6, 6}, [=] { return conv2d_transpose(x, w, b, 2, 1, 1); }, {x, w, b});
  }
  {
    auto x = random_tensor<T>({1, 2, 4, 4}, rng, -1, 1);
    auto w = random_tensor<T>({2, 3, 3, 3}, rng, -1, 1);
    auto b = random_tensor<T>({3}, rng, -1, 1);
    check("conv2d_transpose_stride1", {1, 3, 4, 4}, [=] { return conv2d_transpose(x, w, b, 1, 1, 0); },
          {x, w, b});
  }
  {
    auto x = random_tensor<T>({3, 2, 4, 4}, rng, -2, 3);
    auto g = random_tensor<T>({2}, rng, 0.5, 1.5);
    auto be = random_tensor<T>({2}, rng, -1, 1);
    auto state = std::make_shared<BatchNormState<T>>(2);
    check("batch_norm_train", {3, 2, 4, 4}, [=] { return batch_norm(x, g, be, *state, Mode::train); },
          {x, g, be});
  }
  {
    auto x = random_tensor<T>({2, 3, 3, 3}, rng, -2, 2);
    auto g = random_tensor<T>({3}, rng, 0.5, 1.5);
    auto be = random_tensor<T>({3}, rng, -1, 1);
    auto state = std::make_shared<BatchNormState<T>>(3);
    for (Index c = 0; c < 3; ++c) {
      state->running_mean.mutable_data()[c] = static_cast<T>(rng.uniform(-0.5, 0.5));
      state->running_var.mutable_data()[c] = static_cast<T>(rng.uniform(0.5, 2.0));
    }
    check("batch_norm_eval", {2, 3, 3, 3}, [=] { return batch_norm(x, g, be, *state, Mode::eval); },
          {x, g, be});
  }
  {
    auto x = random_away_from<T>({2, 3, 4, 4}, rng, -2, 2, {0.0}, margin);
    check("relu", {2, 3, 4, 4}, [=] { return relu(x); }, {x});
  }
  {
    auto x = random_away_from<T>({2, 3, 4, 4}, rng, -2, 2, {0.0}, margin);
    check("leaky_relu", {2, 3, 4, 4}, [=] { return leaky_relu(x, 0.2); }, {x});
  }
  {
    auto x = random_away_from<T>({2, 3, 4, 4}, rng, -2, 2, {0.0}, margin);
    auto a = random_tensor<T>({3}, rng, 0.05, 0.5);
    check("prelu", {2, 3, 4, 4}, [=] { return prelu(x, a); }, {x, a});
  }
  {
    auto x = random_tensor<T>({2, 5}, rng, -4, 4);
    check("sigmoid", {2, 5}, [=] { return sigmoid(x); }, {x});
  }
  {
    auto x = random_tensor<T>({2, 5}, rng, -2, 2);
    check("tanh", {2, 5}, [=] { return liquiform::tanh(x); }, {x});
  }
  {
    auto x = random_tensor<T>({2, 2, 3, 4}, rng, -1, 1);
    check("bilinear_upsample", {2, 2, 6, 8}, [=] { return bilinear_upsample(x, 2); }, {x});
  }
  {
    auto x = random_tensor<T>({3, 5}, rng, -1, 1);
    auto w = random_tensor<T>({5, 4}, rng, -1, 1);
    auto b = random_tensor<T>({4}, rng, -1, 1);
    check("dense", {3, 4}, [=] { return dense(x, w, b); }, {x, w, b});
  }
  {
    auto a = random_tensor<T>({2, 2, 3, 3}, rng, -1, 1);
    auto b = random_tensor<T>({2, 3, 3, 3}, rng, -1, 1);
    check("concat_channels", {2, 5, 3, 3}, [=] { return concat_channels(a, b); }, {a, b});
  }
  {
    auto a = random_tensor<T>({2, 3, 4}, rng, -1, 1);
    auto b = random_tensor<T>({2, 3, 4}, rng, -1, 1);
    check("add", {2, 3, 4}, [=] { return add(a, b); }, {a, b});
    check("sub", {2, 3, 4}, [=] { return sub(a, b); }, {a, b});
    check("mul", {2, 3, 4}, [=] { return mul(a, b); }, {a, b});
    check("scale", {2, 3, 4}, [=] { return scale(a, -1.7); }, {a});
  }
  {
    auto x = random_away_from<T>({2, 3, 4}, rng, -1, 1, {-0.5, 0.5}, margin);
    check("clamp", {2, 3, 4}, [=] { return clamp(x, -0.5, 0.5); }, {x});
  }
  {
    auto x = random_tensor<T>({2, 3, 2, 2}, rng, -1, 1);
    check("flatten", {2, 12}, [=] { return flatten(x); }, {x});
    check("reshape", {4, 6}, [=] { return reshape(x, Shape{4, 6}); }, {x});
  }
  {
    auto x = random_tensor<T>({3, 4}, rng, -1, 1);
    check_scalar("sum", [=] { return sum(mul(x, x)); }, {x});
    check_scalar("mean", [=] { return mean(mul(x, x)); }, {x});
  }
  {
    auto p = random_tensor<T>({2, 3, 4, 4}, rng, 0, 1);
    auto t = random_tensor<T>({2, 3, 4, 4}, rng, 0, 1);
    check_scalar("content_loss", [=] { return content_loss(p, t); }, {p, t});
  }
  {
    auto s = random_tensor<T>({4}, rng, 0.1, 0.9);
    check_scalar("adversarial_loss", [=] { return adversarial_loss(s); }, {s});
  }
  {
    auto r = random_tensor<T>({4}, rng, 0.1, 0.9);
    auto f = random_tensor<T>({4}, rng, 0.1, 0.9);
    check_scalar("discriminator_loss", [=] { return discriminator_loss(r, f); }, {r, f});
  }
  {
    // Two conv layers with a ReLU between them. Draws are repeated until no
    // hidden pre-activation sits within the finite-difference reach of the kink.
    Tensor<T> x, w1, b1, w2, b2;
    for (int attempt = 0;; ++attempt) {
      x = random_tensor<T>({1, 2, 4, 4}, rng, -1, 1);
      w1 = random_tensor<T>({3, 2, 3, 3}, rng, -1, 1);
      b1 = random_tensor<T>({3}, rng, -0.5, 0.5);
      w2 = random_tensor<T>({2, 3, 3, 3}, rng, -1, 1);
      b2 = random_tensor<T>({2}, rng, -0.5, 0.5);
      NoGradGuard ng;
      auto pre = conv2d(x, w1, b1, 1, 1);
      double closest = 1e9;
      for (T v : pre.data()) closest = std::min(closest, std::abs(static_cast<double>(v)));
      if (closest > margin || attempt > 10000) break;
    }
    check_scalar(
        "two_layer_conv_net",
        [=] {
          auto h = relu(conv2d(x, w1, b1, 1, 1));
          auto y = conv2d(h, w2, b2, 1, 1);
          return scale(sum(mul(y, y)), 0.5);
        },
        {x, w1, b1, w2, b2});
  }
  return results;
}

}  // namespace

std::vector<GradCheckResult> operator_gradient_suite(std::uint64_t seed, double tolerance, double step) {
  return run_suite<double>(seed, tolerance, step);
}

std::vector<GradCheckResult> operator_gradient_suite_f32(std::uint64_t seed, double tolerance, double step) {
  return run_suite<float>(seed, tolerance, step);
}

template double gradient_relative_error_at(const std::function<Tensor<float>()>&,
                                           std::vector<std::pair<Tensor<float>, Index>>, double);
template double gradient_relative_error_at(const std::function<Tensor<double>()>&,
                                           std::vector<std::pair<Tensor<double>, Index>>, double);

}  // namespace liquiform
