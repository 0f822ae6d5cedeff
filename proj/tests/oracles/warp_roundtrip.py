#!/usr/bin/env python3
"""Independent round-trip check for the radial warp.

Distorts the bullseye fixture with k, restores with 1/k and prints the PSNR
inside the disk of radius min(k, 1/k) * R, where R = min(W, H) / 2. Plain
numpy bilinear sampling in absolute pixel coordinates, clamped to the image.
"""
import sys
from pathlib import Path

import numpy as np
from PIL import Image


def bilinear(img, xs, ys):
    h, w = img.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(int), w - 2)
    y0 = np.minimum(np.floor(ys).astype(int), h - 2)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    return ((1 - fx) * (1 - fy) * img[y0, x0] + fx * (1 - fy) * img[y0, x0 + 1]
            + (1 - fx) * fy * img[y0 + 1, x0] + fx * fy * img[y0 + 1, x0 + 1])


def warp(img, k):
    h, w = img.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    radius = min(w, h) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    inside = dx * dx + dy * dy <= radius * radius
    sampled = np.clip(bilinear(img, cx + dx / k, cy + dy / k), 0.0, 1.0).astype(np.float32)
    return np.where(inside[..., None], sampled, img)


def psnr_in_disk(a, b, radius):
    h, w = a.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w]
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius
    d = a.astype(np.float64)[mask] - b.astype(np.float64)[mask]
    return 10.0 * np.log10(1.0 / np.mean(d * d))


def main():
    path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent.parent / "fixtures" / "bullseye.png"
    img = np.asarray(Image.open(path), dtype=np.float32) / np.float32(255.0)
    if img.ndim == 2:
        img = img[..., None]
    radius = min(img.shape[:2]) / 2.0
    for k in (0.5, 0.8, 1.5, 2.7):
        restored = warp(warp(img, k), 1.0 / k)
        print(f"k={k} psnr={psnr_in_disk(restored, img, min(k, 1.0 / k) * radius):.4f}")


if __name__ == "__main__":
    main()
