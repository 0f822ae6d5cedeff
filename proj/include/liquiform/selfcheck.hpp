#pragma once

#include <array>
#include <string>
#include <vector>

#include "liquiform/image.hpp"

namespace liquiform {

// Bullseye used by the warp checks: 224x224, ring period 28, stored as 8-bit.
// Byte-identical to tests/fixtures/bullseye.png.
Image bullseye_fixture();

struct RoundTripFloor {
  double k;
  double psnr;  // interior-disk PSNR of distort then analytic_restore, in dB
};

// Calibrated once with tests/oracles/warp_roundtrip.py. A run passes when it
// reaches 30 dB and stays within 0.1 dB of the calibrated value.
inline constexpr std::array<RoundTripFloor, 4> kRoundTripFloors = {
    {{0.5, 40.8359}, {0.8, 47.4765}, {1.5, 31.5776}, {2.7, 32.3483}}};
inline constexpr double kRoundTripMinimum = 30.0;
inline constexpr double kRoundTripTolerance = 0.1;

// Interior-disk PSNR of the bullseye round trip at k: the disk of radius
// min(k, 1/k) * R about the centre, which both passes sample without clamping.
double bullseye_round_trip_psnr(double k);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Gradient suite (3 seeds, 64-bit, 1e-4), warp identity and round trip, and
// the metric oracles. fault names an operator whose backward pass is
// deliberately corrupted for the run; empty for none.
std::vector<CheckResult> run_selfcheck(const std::string& fault = "");

}  // namespace liquiform
