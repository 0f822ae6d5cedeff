#pragma once

#include "liquiform/image.hpp"
#include "liquiform/warp.hpp"

namespace liquiform {

// Reported for identical images instead of +infinity.
inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) over all pixels and channels, peak value 1.
double psnr(const Image& a, const Image& b);

// PSNR restricted to pixels within radius of center (inclusive).
double psnr_in_disk(const Image& a, const Image& b, Point center, double radius);

// Mean structural similarity over all valid 11x11 windows (Gaussian weights,
// sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, computed per channel and averaged.
double ssim(const Image& a, const Image& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

}  // namespace liquiform
