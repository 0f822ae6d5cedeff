#include "liquiform/warp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "liquiform/error.hpp"
#include "liquiform/parallel.hpp"

namespace liquiform {

PolarCoord to_polar(double x, double y, Point center) {
  const double dx = x - center.x, dy = y - center.y;
  const double r = std::sqrt(dx * dx + dy * dy);
  if (r == 0.0) return {0.0, 0.0};
  double theta = std::atan2(dy, dx);
  if (theta == -std::numbers::pi) theta = std::numbers::pi;
  return {r, theta};
}

Point resolved_center(const WarpSpec& spec, const Image& image) {
  if (spec.center) return *spec.center;
  return {(image.width() - 1) / 2.0, (image.height() - 1) / 2.0};
}

double resolved_radius(const WarpSpec& spec, const Image& image) {
  if (spec.region_radius) return *spec.region_radius;
  return std::min(image.width(), image.height()) / 2.0;
}

void validate(const WarpSpec& spec, const Image& image) {
  if (!(spec.k > 0.0) || !std::isfinite(spec.k)) {
    throw ContractError("scaling factor k must be positive, got " + std::to_string(spec.k));
  }
  const double r = resolved_radius(spec, image);
  const double diagonal = std::hypot(image.width(), image.height());
  if (!(r > 0.0) || r > diagonal) {
    throw ContractError("region radius must lie in (0, " + std::to_string(diagonal) + "], got " +
                        std::to_string(r));
  }
  if (spec.center && (!std::isfinite(spec.center->x) || !std::isfinite(spec.center->y))) {
    throw ContractError("warp centre must be finite");
  }
}

namespace {

// Grid nodes along one axis sit at offsets (i - c), i = 0..n-1, from the
// centre. Returns the left node of the interpolation pair for offset u:
// the largest i with (i - c) <= u, limited to [0, n - 2].
int lower_node(double u, double c, int n) {
  int i = static_cast<int>(std::floor(u + c));
  while (i + 1 <= n - 1 && (i + 1) - c <= u) ++i;
  while (i > 0 && i - c > u) --i;
  return std::clamp(i, 0, n - 2);
}

// Bilinear sampling at centre-relative offset (u, v). The weights are tent
// functions of the distance to each node and the four products are summed
// as two diagonal pairs; both choices are invariant under mirroring and
// axis swaps, so sampling commutes bit-exactly with 90-degree rotations about
// the image centre. Integer node offsets reproduce the node value exactly.
void sample_offset(const Image& img, Point c, double u, double v, float* out) {
  const int w = img.width(), h = img.height();
  u = std::clamp(u, -c.x, (w - 1) - c.x);
  v = std::clamp(v, -c.y, (h - 1) - c.y);
  const int x0 = lower_node(u, c.x, w), y0 = lower_node(v, c.y, h);
  const double wx0 = 1.0 - std::abs(u - (x0 - c.x));
  const double wx1 = 1.0 - std::abs(u - (x0 + 1 - c.x));
  const double wy0 = 1.0 - std::abs(v - (y0 - c.y));
  const double wy1 = 1.0 - std::abs(v - (y0 + 1 - c.y));
  const double w00 = wx0 * wy0, w10 = wx1 * wy0, w01 = wx0 * wy1, w11 = wx1 * wy1;
  for (int ch = 0; ch < img.channels(); ++ch) {
    const double t00 = w00 * img.at(y0, x0, ch);
    const double t10 = w10 * img.at(y0, x0 + 1, ch);
    const double t01 = w01 * img.at(y0 + 1, x0, ch);
    const double t11 = w11 * img.at(y0 + 1, x0 + 1, ch);
    const double value = (t00 + t11) + (t10 + t01);
    out[ch] = std::clamp(static_cast<float>(value), 0.0f, 1.0f);
  }
}

}  // namespace

std::vector<float> bilinear_sample(const Image& image, double x, double y) {
  std::vector<float> out(static_cast<std::size_t>(image.channels()));
  sample_offset(image, Point{0.0, 0.0}, x, y, out.data());
  return out;
}

Point source_coordinate(const WarpSpec& spec, const Image& image, double x, double y) {
  validate(spec, image);
  const Point c = resolved_center(spec, image);
  const double r = resolved_radius(spec, image);
  const double dx = x - c.x, dy = y - c.y;
  if (dx * dx + dy * dy > r * r) return {x, y};
  return {c.x + dx / spec.k, c.y + dy / spec.k};
}

Image distort(const Image& image, const WarpSpec& spec) {
  validate(spec, image);
  const Point c = resolved_center(spec, image);
  const double radius = resolved_radius(spec, image);
  const double r2 = radius * radius;
  const double k = spec.k;
  Image out = image;
  parallel_for(static_cast<std::size_t>(image.height()), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    const double dy = y - c.y;
    for (int x = 0; x < image.width(); ++x) {
      const double dx = x - c.x;
      if (dx * dx + dy * dy > r2) continue;
      sample_offset(image, c, dx / k, dy / k, &out.at(y, x, 0));
    }
  });
  return out;
}

Image analytic_restore(const Image& image, const WarpSpec& spec) {
  if (!(spec.k > 0.0)) validate(spec, image);
  WarpSpec inverse = spec;
  inverse.k = 1.0 / spec.k;
  return distort(image, inverse);
}

Image compose(const Image& image, const std::vector<WarpSpec>& specs) {
  Image out = image;
  for (const WarpSpec& s : specs) out = distort(out, s);
  return out;
}

namespace {

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ContractError("invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::string format_warp_specs(const std::vector<WarpSpec>& specs) {
  std::string out;
  for (const WarpSpec& s : specs) {
    out += "k=" + format_number(s.k);
    if (s.center) out += " center=" + format_number(s.center->x) + "," + format_number(s.center->y);
    out += " region=" + (s.region_radius ? format_number(*s.region_radius) : std::string("full"));
    out += '\n';
  }
  return out;
}

WarpSpec parse_warp_spec_line(std::string_view line) {
  WarpSpec spec;
  bool has_k = false;
  std::istringstream tokens{std::string(line)};
  std::string token;
  while (tokens >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw ContractError("expected key=value, got '" + token + "'");
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "k") {
      spec.k = parse_number(value, "k");
      has_k = true;
    } else if (key == "center") {
      if (value == "auto") continue;
      const auto comma = value.find(',');
      if (comma == std::string::npos) throw ContractError("center must be <x>,<y>, got '" + value + "'");
      spec.center = Point{parse_number(std::string_view(value).substr(0, comma), "center x"),
                          parse_number(std::string_view(value).substr(comma + 1), "center y")};
    } else if (key == "region") {
      if (value != "full") spec.region_radius = parse_number(value, "region radius");
    } else {
      throw ContractError("unknown warp key '" + key + "'");
    }
  }
  if (!has_k) throw ContractError("warp effect is missing k");
  if (!(spec.k > 0.0)) throw ContractError("scaling factor k must be positive");
  return spec;
}

std::vector<WarpSpec> parse_warp_specs(std::string_view text) {
  std::vector<WarpSpec> specs;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) specs.push_back(parse_warp_spec_line(line));
    start = end + 1;
  }
  return specs;
}

Image make_bullseye(int size, double period) {
  Image img(size, size, 1);
  const double c = (size - 1) / 2.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double r = std::hypot(x - c, y - c);
      img.at(y, x) = static_cast<float>(0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * r / period));
    }
  return img;
}

std::vector<double> ring_crossings(const Image& image, double max_radius) {
  const double cx = (image.width() - 1) / 2.0, cy = (image.height() - 1) / 2.0;
  const int row = static_cast<int>(std::floor(cy + 0.5));
  const double dy = row - cy;
  std::vector<double> radii;
  const int first = static_cast<int>(std::ceil(cx));
  auto value = [&](int x) {
    double s = 0;
    for (int ch = 0; ch < image.channels(); ++ch) s += image.at(row, x, ch);
    return s / image.channels() - 0.5;
  };
  for (int x = first; x + 1 < image.width(); ++x) {
    const double a = value(x), b = value(x + 1);
    if ((a < 0) == (b < 0) || a == b) continue;
    const double dx = (x + a / (a - b)) - cx;
    const double r = std::hypot(dx, dy);
    if (r > max_radius) break;
    radii.push_back(r);
  }
  return radii;
}

}  // namespace liquiform
