#pragma once

#include <span>
#include <vector>

#include "liquiform/tensor.hpp"

namespace liquiform {

// Raster of intensities in [0, 1], stored row-major with interleaved channels
// (HWC). Column x, row y, origin at the top-left pixel.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, float fill = 0.0f);
  // Throws ContractError if a value is outside [0, 1] or not finite.
  Image(int height, int width, int channels, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  float at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }
  float& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Half-pixel-centred bilinear resampling to height x width.
Image resize_bilinear(const Image& image, int height, int width);

// Gray is replicated into three channels; RGB is returned unchanged.
Image to_rgb(const Image& image);

// Image rotated 90 degrees counter-clockwise.
Image rotate90(const Image& image);

// Stacks equally shaped images into [N, C, H, W].
template <typename T>
Tensor<T> images_to_tensor(std::span<const Image> images);

// Item n of an [N, C, H, W] tensor, clamped into [0, 1].
template <typename T>
Image tensor_to_image(const Tensor<T>& batch, Index n = 0);

}  // namespace liquiform
