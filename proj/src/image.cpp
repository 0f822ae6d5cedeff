#include "liquiform/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "liquiform/error.hpp"

namespace liquiform {

namespace {

void check_geometry(int height, int width, int channels) {
  if (height < 2 || width < 2) {
    throw ContractError("image must be at least 2x2, got " + std::to_string(height) + "x" +
                        std::to_string(width));
  }
  if (channels != 1 && channels != 3) {
    throw ContractError("image must have 1 or 3 channels, got " + std::to_string(channels));
  }
}

}  // namespace

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  check_geometry(height, width, channels);
  if (!(fill >= 0.0f && fill <= 1.0f)) throw ContractError("image fill value outside [0, 1]");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image::Image(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_geometry(height, width, channels);
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DimensionError("image buffer has " + std::to_string(data_.size()) + " values, expected " +
                         std::to_string(static_cast<std::size_t>(height) * width * channels));
  }
  for (float v : data_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("image intensity outside [0, 1]");
  }
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (height == image.height() && width == image.width()) return image;
  Image out(height, width, image.channels());
  const double sy = static_cast<double>(image.height()) / height;
  const double sx = static_cast<double>(image.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = std::min(static_cast<int>(fy), image.height() - 2);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = std::min(static_cast<int>(fx), image.width() - 2);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels(); ++c) {
        const double top = (1 - wx) * image.at(y0, x0, c) + wx * image.at(y0, x0 + 1, c);
        const double bottom = (1 - wx) * image.at(y0 + 1, x0, c) + wx * image.at(y0 + 1, x0 + 1, c);
        out.at(y, x, c) = std::clamp(static_cast<float>((1 - wy) * top + wy * bottom), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

Image to_rgb(const Image& image) {
  if (image.channels() == 3) return image;
  Image out(image.height(), image.width(), 3);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(y, x, 0);
  return out;
}

Image rotate90(const Image& image) {
  const int h = image.height(), w = image.width();
  Image out(w, h, image.channels());
  // Counter-clockwise: source column x becomes row (w - 1 - x).
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < image.channels(); ++c) out.at(w - 1 - x, y, c) = image.at(y, x, c);
  return out;
}

template <typename T>
Tensor<T> images_to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ContractError("cannot stack an empty image list");
  const Image& first = images.front();
  const Index n = static_cast<Index>(images.size()), c = first.channels(), h = first.height(),
              w = first.width();
  std::vector<T> data(static_cast<std::size_t>(n * c * h * w));
  for (Index i = 0; i < n; ++i) {
    const Image& img = images[static_cast<std::size_t>(i)];
    if (!img.same_shape(first)) throw DimensionError("images in a batch must share one shape");
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
          data[static_cast<std::size_t>(((i * c + ch) * h + y) * w + x)] =
              static_cast<T>(img.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(ch)));
  }
  return Tensor<T>({n, c, h, w}, std::move(data));
}

template <typename T>
Image tensor_to_image(const Tensor<T>& batch, Index n) {
  const Shape& s = batch.shape();
  if (s.size() != 4) throw DimensionError("expected an [N, C, H, W] tensor, got " + to_string(s));
  if (n < 0 || n >= s[0]) throw DimensionError("batch index out of range");
  const Index c = s[1], h = s[2], w = s[3];
  Image out(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (Index ch = 0; ch < c; ++ch)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        const double v = batch[((n * c + ch) * h + y) * w + x];
        out.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(ch)) =
            static_cast<float>(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0));
      }
  return out;
}

template Tensor<float> images_to_tensor(std::span<const Image>);
template Tensor<double> images_to_tensor(std::span<const Image>);
template Image tensor_to_image(const Tensor<float>&, Index);
template Image tensor_to_image(const Tensor<double>&, Index);

}  // namespace liquiform
