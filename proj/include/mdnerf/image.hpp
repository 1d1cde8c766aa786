#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mdnerf/common.hpp"

namespace mdnerf {

// Row-major H x W x C buffer.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, T fill = T{})
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<size_t>(height) * width * channels, fill) {
    if (height <= 0 || width <= 0 || channels <= 0)
      throw ArgumentError("Image: non-positive dimensions");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int y, int x, int c = 0) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  const T& at(int y, int x, int c = 0) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  bool in_bounds(int y, int x) const {
    return y >= 0 && y < height_ && x >= 0 && x < width_;
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }
  friend bool operator==(const Image& a, const Image& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ &&
           a.channels_ == b.channels_ && a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using ImageRgb = Image<double>;   // 3 channels, values in [0,1]
using ImageGray = Image<double>;  // 1 channel
using ImageBool = Image<uint8_t>;

enum class DepthFrame { kRelative, kAbsolute };

// Depth values plus a validity mask. Relative maps carry no unit claim.
struct DepthMap {
  Image<double> values;
  Image<uint8_t> validity;
  DepthFrame frame = DepthFrame::kAbsolute;

  DepthMap() = default;
  DepthMap(int height, int width, DepthFrame f)
      : values(height, width, 1, 0.0),
        validity(height, width, 1, 1),
        frame(f) {}

  int height() const { return values.height(); }
  int width() const { return values.width(); }
  bool valid(int y, int x) const { return validity.at(y, x) != 0; }
  double at(int y, int x) const { return values.at(y, x); }
  double& at(int y, int x) { return values.at(y, x); }
};

// Strided patch footprint: pixel (y0 + stride*i, x0 + stride*j).
struct PatchSpec {
  int origin_y = 0;
  int origin_x = 0;
  int height = 1;
  int width = 1;
  int stride = 1;

  int pixel_y(int i) const { return origin_y + stride * i; }
  int pixel_x(int j) const { return origin_x + stride * j; }
  int pixel_count() const { return height * width; }

  bool inside(int image_height, int image_width) const {
    if (height < 1 || width < 1 || stride < 1) return false;
    const int last_y = origin_y + stride * (height - 1);
    const int last_x = origin_x + stride * (width - 1);
    return origin_y >= 0 && origin_x >= 0 && last_y < image_height &&
           last_x < image_width;
  }
};

}  // namespace mdnerf
