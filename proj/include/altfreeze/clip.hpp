#pragma once

#include <cstddef>
#include <span>

#include "altfreeze/tensor.hpp"

namespace altfreeze {

/// A video sample laid out as [C, L, H, W] with values in [0, 1].
class Clip {
 public:
  Clip() = default;
  Clip(std::size_t channels, std::size_t frames, std::size_t height, std::size_t width,
       float fill = 0.0f);
  explicit Clip(Tensor<float> data);

  std::size_t channels() const { return data_.extent(0); }
  std::size_t frames() const { return data_.extent(1); }
  std::size_t height() const { return data_.extent(2); }
  std::size_t width() const { return data_.extent(3); }
  std::size_t plane_size() const { return height() * width(); }

  const Tensor<float>& tensor() const { return data_; }
  Tensor<float>& tensor() { return data_; }

  float& at(std::size_t c, std::size_t t, std::size_t y, std::size_t x) {
    return data_[((c * frames() + t) * height() + y) * width() + x];
  }
  float at(std::size_t c, std::size_t t, std::size_t y, std::size_t x) const {
    return data_[((c * frames() + t) * height() + y) * width() + x];
  }

  /// The H*W plane of channel c at frame t.
  std::span<float> plane(std::size_t c, std::size_t t);
  std::span<const float> plane(std::size_t c, std::size_t t) const;

  void clamp_unit();
  bool operator==(const Clip& other) const = default;

 private:
  Tensor<float> data_;
};

/// Per-pixel blending weights in [0, 1], shape [H, W].
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t height, std::size_t width, float fill = 0.0f);
  explicit Mask(Tensor<float> data);

  std::size_t height() const { return data_.extent(0); }
  std::size_t width() const { return data_.extent(1); }
  const Tensor<float>& tensor() const { return data_; }
  Tensor<float>& tensor() { return data_; }
  float& at(std::size_t y, std::size_t x) { return data_[y * width() + x]; }
  float at(std::size_t y, std::size_t x) const { return data_[y * width() + x]; }

  /// Fraction of pixels with weight above 0.5.
  double coverage() const;

 private:
  Tensor<float> data_;
};

}  // namespace altfreeze
