#include "liquiform/losses.hpp"

#include <cmath>

#include "liquiform/error.hpp"
#include "liquiform/ops.hpp"

namespace liquiform {

namespace {

template <typename T>
// NaN passes through so the training loop can report the step it appeared at.
void check_scores(const char* op, const Tensor<T>& scores) {
  for (T s : scores.data()) {
    if (s < T{0} || s > T{1}) {
      throw ContractError(std::string(op) + ": discriminator score " + std::to_string(double(s)) +
                          " lies outside [0, 1]");
    }
  }
}

double safe_log(double v) { return std::log(std::max(v, kScoreFloor)); }

// d/dv of log(max(v, floor)).
double safe_log_slope(double v) { return v > kScoreFloor ? 1.0 / v : 0.0; }

}  // namespace

template <typename T>
Tensor<T> content_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("content_loss: prediction " + to_string(pred.shape()) + " vs target " +
                         to_string(target.shape()));
  }
  auto p = pred.data();
  auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - t[i];
    acc += d * d;
  }
  const double count = static_cast<double>(p.size());
  auto* pn = pred.node().get();
  auto* tn = target.node().get();
  return detail::make_result<T>(
      "content_loss", Shape{1}, std::vector<T>{static_cast<T>(acc / count)}, {&pred, &target},
      [=](detail::Node<T>& self) {
        const double g = 2.0 * self.grad[0] / count;
        for (std::size_t i = 0; i < pn->data.size(); ++i) {
          const double d = static_cast<double>(pn->data[i]) - tn->data[i];
          if (pn->requires_grad) pn->ensure_grad()[i] += static_cast<T>(g * d);
          if (tn->requires_grad) tn->ensure_grad()[i] -= static_cast<T>(g * d);
        }
      });
}

template <typename T>
Tensor<T> adversarial_loss(const Tensor<T>& fake_scores) {
  check_scores("adversarial_loss", fake_scores);
  auto s = fake_scores.data();
  double acc = 0.0;
  for (T v : s) acc -= safe_log(v);
  const double count = static_cast<double>(s.size());
  auto* sn = fake_scores.node().get();
  return detail::make_result<T>("adversarial_loss", Shape{1}, std::vector<T>{static_cast<T>(acc / count)},
                                {&fake_scores}, [=](detail::Node<T>& self) {
                                  const double g = self.grad[0] / count;
                                  auto& d = sn->ensure_grad();
                                  for (std::size_t i = 0; i < d.size(); ++i) {
                                    d[i] -= static_cast<T>(g * safe_log_slope(sn->data[i]));
                                  }
                                });
}

template <typename T>
Tensor<T> discriminator_loss(const Tensor<T>& real_scores, const Tensor<T>& fake_scores) {
  if (real_scores.numel() != fake_scores.numel()) {
    throw DimensionError("discriminator_loss: " + std::to_string(real_scores.numel()) +
                         " real scores vs " + std::to_string(fake_scores.numel()) + " fake scores");
  }
  check_scores("discriminator_loss", real_scores);
  check_scores("discriminator_loss", fake_scores);
  auto r = real_scores.data();
  auto f = fake_scores.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) acc -= safe_log(r[i]) + safe_log(1.0 - f[i]);
  const double count = static_cast<double>(r.size());
  auto* rn = real_scores.node().get();
  auto* fn = fake_scores.node().get();
  return detail::make_result<T>(
      "discriminator_loss", Shape{1}, std::vector<T>{static_cast<T>(acc / count)},
      {&real_scores, &fake_scores}, [=](detail::Node<T>& self) {
        const double g = self.grad[0] / count;
        for (std::size_t i = 0; i < rn->data.size(); ++i) {
          if (rn->requires_grad) rn->ensure_grad()[i] -= static_cast<T>(g * safe_log_slope(rn->data[i]));
          if (fn->requires_grad) {
            fn->ensure_grad()[i] += static_cast<T>(g * safe_log_slope(1.0 - fn->data[i]));
          }
        }
      });
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& mse, const Tensor<T>& adv, double lambda_adv, double content_weight) {
  if (lambda_adv < 0.0 || content_weight < 0.0) throw ContractError("total_loss: weights must be >= 0");
  if (lambda_adv == 0.0) return content_weight == 1.0 ? mse : scale(mse, content_weight);
  Tensor<T> weighted_adv = scale(adv, lambda_adv);
  if (content_weight == 0.0) return weighted_adv;
  return add(content_weight == 1.0 ? mse : scale(mse, content_weight), weighted_adv);
}

template Tensor<float> content_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> content_loss(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> adversarial_loss(const Tensor<float>&);
template Tensor<double> adversarial_loss(const Tensor<double>&);
template Tensor<float> discriminator_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> discriminator_loss(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> total_loss(const Tensor<float>&, const Tensor<float>&, double, double);
template Tensor<double> total_loss(const Tensor<double>&, const Tensor<double>&, double, double);

}  // namespace liquiform
