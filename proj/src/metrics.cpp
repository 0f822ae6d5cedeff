#include "liquiform/metrics.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "liquiform/error.hpp"

namespace liquiform {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": image shapes differ (" + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + "x" + std::to_string(a.channels()) + " vs " +
                         std::to_string(b.height()) + "x" + std::to_string(b.width()) + "x" +
                         std::to_string(b.channels()) + ")");
  }
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> g{};
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    sum += d * d;
  }
  return psnr_from_mse(sum / static_cast<double>(a.data().size()));
}

double psnr_in_disk(const Image& a, const Image& b, Point center, double radius) {
  require_same(a, b, "psnr_in_disk");
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const double dx = x - center.x, dy = y - center.y;
      if (dx * dx + dy * dy > radius * radius) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = static_cast<double>(a.at(y, x, c)) - b.at(y, x, c);
        sum += d * d;
        ++count;
      }
    }
  if (count == 0) throw ContractError("psnr_in_disk: disk contains no pixels");
  return psnr_from_mse(sum / static_cast<double>(count));
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow) {
    throw ContractError("ssim needs images of at least 11x11 pixels");
  }
  const auto g = gaussian_window();
  const int h = a.height(), w = a.width(), oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;

  // Separable filtering: horizontal pass into (h x ow) planes, then vertical.
  double total = 0.0;
  std::vector<double> row_stats(static_cast<std::size_t>(h) * ow * 5);
  for (int c = 0; c < a.channels(); ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < ow; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < kSsimWindow; ++i) {
          const double va = a.at(y, x + i, c), vb = b.at(y, x + i, c);
          ma += g[i] * va;
          mb += g[i] * vb;
          saa += g[i] * (va * va);
          sbb += g[i] * (vb * vb);
          sab += g[i] * (va * vb);
        }
        double* s = &row_stats[(static_cast<std::size_t>(y) * ow + x) * 5];
        s[0] = ma;
        s[1] = mb;
        s[2] = saa;
        s[3] = sbb;
        s[4] = sab;
      }
    double channel_sum = 0.0;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double m[5] = {0, 0, 0, 0, 0};
        for (int i = 0; i < kSsimWindow; ++i) {
          const double* s = &row_stats[(static_cast<std::size_t>(y + i) * ow + x) * 5];
          for (int q = 0; q < 5; ++q) m[q] += g[i] * s[q];
        }
        const double mu_a = m[0], mu_b = m[1];
        const double var_a = m[2] - mu_a * mu_a;
        const double var_b = m[3] - mu_b * mu_b;
        const double cov = m[4] - mu_a * mu_b;
        const double num = (2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2);
        const double den = (mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2);
        channel_sum += num / den;
      }
    total += channel_sum / (static_cast<double>(oh) * ow);
  }
  return total / a.channels();
}

}  // namespace liquiform
