#!/usr/bin/env python3
"""Direct-formula PSNR and SSIM for the metric tests.

Rebuilds the test image pairs from a splitmix64 stream (the same one as
liquiform::Rng, consumed in the same order by tests/unit/test_metrics.cpp)
and evaluates both metrics window by window, without separable filtering.
Writes metrics_oracle.inc next to this file; the C++ tests compare against
the values frozen there.
"""
from pathlib import Path

import numpy as np

MASK = (1 << 64) - 1
PAIRS = 50
SEED = 0x5EED


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)


def random_pair(rng):
    h = 11 + rng.next() % 14
    w = 11 + rng.next() % 14
    c = 1 if rng.next() % 2 == 0 else 3
    a = np.empty((h, w, c), dtype=np.float32)
    b = np.empty((h, w, c), dtype=np.float32)
    for i in range(h * w * c):
        va = rng.next() >> 56
        vb = min(255, max(0, va + int(rng.next() >> 59) - 16))
        a.flat[i] = np.float32(va) / np.float32(255)
        b.flat[i] = np.float32(vb) / np.float32(255)
    return a, b


def noisy_constant(rng, size, level, eps):
    a = np.full((size, size, 1), level, dtype=np.float32)
    b = np.empty_like(a)
    for i in range(size * size):
        u = (rng.next() >> 40) / 16777216.0
        b.flat[i] = np.float32(level + eps * (2.0 * u - 1.0))
    return a, b


def psnr(a, b):
    d = a.astype(np.float64) - b.astype(np.float64)
    mse = np.mean(d * d)
    return 100.0 if mse == 0 else min(100.0, 10.0 * np.log10(1.0 / mse))


def ssim(a, b, size=11, sigma=1.5):
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    d = np.arange(size) - size // 2
    g = np.exp(-(d * d) / (2 * sigma * sigma))
    g /= g.sum()
    win = np.outer(g, g)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    h, w, ch = a.shape
    per_channel = []
    for c in range(ch):
        vals = []
        for y in range(h - size + 1):
            for x in range(w - size + 1):
                pa = a[y:y + size, x:x + size, c]
                pb = b[y:y + size, x:x + size, c]
                ma, mb = np.sum(win * pa), np.sum(win * pb)
                va = np.sum(win * (pa - ma) ** 2)
                vb = np.sum(win * (pb - mb) ** 2)
                cov = np.sum(win * (pa - ma) * (pb - mb))
                vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
        per_channel.append(np.mean(vals))
    return float(np.mean(per_channel))


def main():
    rng = SplitMix64(SEED)
    lines = ["// Generated by metrics_oracle.py; do not edit.",
             f"constexpr std::uint64_t kOracleSeed = 0x{SEED:X};",
             f"constexpr int kOraclePairs = {PAIRS};",
             "constexpr double kOraclePsnr[] = {"]
    psnrs, ssims = [], []
    for _ in range(PAIRS):
        a, b = random_pair(rng)
        psnrs.append(psnr(a, b))
        ssims.append(ssim(a, b))
    lines += [f"    {v:.17g}," for v in psnrs]
    lines += ["};", "constexpr double kOracleSsim[] = {"]
    lines += [f"    {v:.17g}," for v in ssims]
    lines += ["};"]
    a, b = noisy_constant(SplitMix64(7), 32, 0.5, 0.05)
    lines += [f"constexpr double kNoisyConstantSsim = {ssim(a, b):.17g};"]
    out = Path(__file__).with_name("metrics_oracle.inc")
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
