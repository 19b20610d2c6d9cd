#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sfl/errors.hpp"

namespace sfl {

struct Extent {
  int width = 0;
  int height = 0;

  friend bool operator==(const Extent&, const Extent&) = default;
};

/// A C x W x H stack of feature maps.
///
/// Storage is channel-major and row-major inside a channel, so the element
/// (c, x, y) lives at c*W*H + y*W + x. Indices are zero based.
template <typename T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;

  Volume(int channels, int width, int height, T fill = T(0))
      : channels_(channels), width_(width), height_(height) {
    if (channels <= 0 || width <= 0 || height <= 0) {
      throw ConfigError("volume dimensions must be positive, got " + std::to_string(channels) +
                        "x" + std::to_string(width) + "x" + std::to_string(height));
    }
    data_.assign(static_cast<std::size_t>(channels) * width * height, fill);
  }

  Volume(int channels, int width, int height, std::vector<T> data)
      : channels_(channels), width_(width), height_(height), data_(std::move(data)) {
    if (channels <= 0 || width <= 0 || height <= 0) {
      throw ConfigError("volume dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(channels) * width * height) {
      throw ConfigError("volume data length " + std::to_string(data_.size()) +
                        " does not match " + std::to_string(channels) + "x" +
                        std::to_string(width) + "x" + std::to_string(height));
    }
  }

  int channels() const { return channels_; }
  int width() const { return width_; }
  int height() const { return height_; }
  Extent extent() const { return {width_, height_}; }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int c, int x, int y) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  T& operator()(int c, int x, int y) { return data_[index(c, x, y)]; }
  const T& operator()(int c, int x, int y) const { return data_[index(c, x, y)]; }

  std::span<T> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const T> plane(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const Volume& other) const {
    return channels_ == other.channels_ && width_ == other.width_ && height_ == other.height_;
  }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Volume<U> cast() const {
    Volume<U> out(channels_, width_, height_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  int channels_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

inline std::string shape_string(int c, int w, int h) {
  return std::to_string(c) + "x" + std::to_string(w) + "x" + std::to_string(h);
}

template <typename T>
std::string shape_string(const Volume<T>& v) {
  return shape_string(v.channels(), v.width(), v.height());
}

template <typename T>
void require_same_shape(const Volume<T>& a, const Volume<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ConfigError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                      shape_string(b));
  }
}

}  // namespace sfl
