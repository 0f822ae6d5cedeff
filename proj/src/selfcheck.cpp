#include "liquiform/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>

#include "liquiform/gradcheck.hpp"
#include "liquiform/io.hpp"
#include "liquiform/metrics.hpp"
#include "liquiform/ops.hpp"
#include "liquiform/rng.hpp"
#include "liquiform/warp.hpp"

namespace liquiform {

namespace {

#include "metrics_oracle.inc"

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Same draws, in the same order, as random_pair() in metrics_oracle.py.
std::pair<Image, Image> oracle_pair(Rng& rng) {
  const int h = 11 + static_cast<int>(rng.next_u64() % 14);
  const int w = 11 + static_cast<int>(rng.next_u64() % 14);
  const int c = rng.next_u64() % 2 == 0 ? 1 : 3;
  Image a(h, w, c), b(h, w, c);
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const int va = static_cast<int>(rng.next_u64() >> 56);
    const int vb = std::clamp(va + static_cast<int>(rng.next_u64() >> 59) - 16, 0, 255);
    a.data()[i] = static_cast<float>(va) / 255.0f;
    b.data()[i] = static_cast<float>(vb) / 255.0f;
  }
  return {a, b};
}

// Resets the injected fault however the checks exit.
struct FaultScope {
  explicit FaultScope(const std::string& op) { testing::inject_gradient_fault(op); }
  ~FaultScope() { testing::inject_gradient_fault(""); }
};

}  // namespace

Image bullseye_fixture() { return decode_png(encode_png(make_bullseye(224, 28.0))); }

double bullseye_round_trip_psnr(double k) {
  const Image b = bullseye_fixture();
  WarpSpec s;
  s.k = k;
  const Image r = analytic_restore(distort(b, s), s);
  const double radius = std::min(k, 1.0 / k) * resolved_radius(s, b);
  return psnr_in_disk(r, b, resolved_center(s, b), radius);
}

std::vector<CheckResult> run_selfcheck(const std::string& fault) {
  std::vector<CheckResult> out;
  {
    FaultScope scope(fault);
    std::map<std::string, double> worst;
    std::map<std::string, bool> ok;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      for (const auto& r : operator_gradient_suite(seed)) {
        worst[r.op] = std::max(worst[r.op], r.max_rel_error);
        ok.try_emplace(r.op, true);
        ok[r.op] = ok[r.op] && r.passed;
      }
    }
    for (const auto& [op, err] : worst) {
      out.push_back({"gradient " + op, ok[op], "max relative error " + fmt("%.2e", err)});
    }
  }

  {
    const Image b = bullseye_fixture();
    WarpSpec one;
    bool same = distort(b, one) == b;
    Rng rng(20);
    for (int i = 0; i < 20; ++i) {
      Image img(8 + static_cast<int>(rng.below(40)), 8 + static_cast<int>(rng.below(40)), i % 2 ? 3 : 1);
      for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
      same = same && distort(img, one) == img;
    }
    out.push_back({"warp identity", same, "k = 1 on the bullseye and 20 random images"});
  }
  for (const auto& f : kRoundTripFloors) {
    const double got = bullseye_round_trip_psnr(f.k);
    const bool passed = got >= kRoundTripMinimum && got >= f.psnr - kRoundTripTolerance;
    out.push_back({"warp round trip k=" + fmt("%g", f.k), passed,
                   fmt("%.4f dB", got) + " (calibrated " + fmt("%.4f", f.psnr) + ")"});
  }

  {
    Rng rng(kOracleSeed);
    double psnr_err = 0.0, ssim_err = 0.0;
    for (int i = 0; i < kOraclePairs; ++i) {
      const auto [a, b] = oracle_pair(rng);
      psnr_err = std::max(psnr_err, std::abs(psnr(a, b) - kOraclePsnr[i]));
      ssim_err = std::max(ssim_err, std::abs(ssim(a, b) - kOracleSsim[i]));
    }
    out.push_back({"metric oracle psnr", psnr_err <= 1e-6, "max deviation " + fmt("%.2e", psnr_err)});
    out.push_back({"metric oracle ssim", ssim_err <= 1e-6, "max deviation " + fmt("%.2e", ssim_err)});
    const Image zeros(16, 16, 3, 0.0f);
    const double offset = psnr(zeros, Image(16, 16, 3, 0.1f));
    Image a(20, 20, 3);
    for (auto& v : a.data()) v = static_cast<float>(rng.uniform());
    const bool examples = ssim(a, a) == 1.0 && std::abs(offset - 20.0) < 1e-6 && psnr(a, a) == kPsnrCap;
    out.push_back({"metric examples", examples, "psnr offset 0.1 = " + fmt("%.9f", offset) + " dB"});
  }
  return out;
}

}  // namespace liquiform
