#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "liquiform/image.hpp"

namespace liquiform {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct PolarCoord {
  double r = 0.0;
  double theta = 0.0;  // (-pi, pi]; 0 at the centre
};

PolarCoord to_polar(double x, double y, Point center);

// One radial scaling effect r' = k * r about a centre. Points farther than
// region_radius from the centre are left untouched.
struct WarpSpec {
  double k = 1.0;
  std::optional<Point> center;          // unset: image centre ((W-1)/2, (H-1)/2)
  std::optional<double> region_radius;  // unset: inscribed circle, min(W, H) / 2
  friend bool operator==(const WarpSpec&, const WarpSpec&) = default;
};

Point resolved_center(const WarpSpec& spec, const Image& image);
double resolved_radius(const WarpSpec& spec, const Image& image);

// Throws ContractError for k <= 0, a non-positive radius, or a radius beyond
// the image diagonal.
void validate(const WarpSpec& spec, const Image& image);

// Bilinear blend of the four pixels around (x, y); coordinates outside the
// image are clamped to the nearest valid position first.
std::vector<float> bilinear_sample(const Image& image, double x, double y);

// Where destination pixel (x, y) reads from, before edge clamping. Lies on
// the ray from the centre through (x, y), at 1/k of its radius. Pixels outside
// the region map to themselves.
Point source_coordinate(const WarpSpec& spec, const Image& image, double x, double y);

// Backward-resampled radial distortion.
Image distort(const Image& image, const WarpSpec& spec);

// Inverse of distort for a known spec (same centre and region, k -> 1/k).
Image analytic_restore(const Image& image, const WarpSpec& spec);

// Applies the effects in order. An empty list returns the input.
Image compose(const Image& image, const std::vector<WarpSpec>& specs);

// Text form: one effect per line, "k=<real> [center=<x>,<y>] [region=<r>|full]".
// Blank lines and '#' comments are ignored.
std::string format_warp_specs(const std::vector<WarpSpec>& specs);
std::vector<WarpSpec> parse_warp_specs(std::string_view text);
WarpSpec parse_warp_spec_line(std::string_view line);

// Concentric rings 0.5 + 0.5 cos(2 pi r / period) about the image centre; the
// intensity crosses 0.5 at r = period/4 + n * period/2.
Image make_bullseye(int size, double period);

// Radii (from the image centre) where intensity crosses 0.5, found along the
// pixel row nearest the centre going right, to sub-pixel precision.
std::vector<double> ring_crossings(const Image& image, double max_radius);

}  // namespace liquiform
