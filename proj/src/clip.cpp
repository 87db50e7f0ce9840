#include "altfreeze/clip.hpp"

#include <algorithm>
#include <stdexcept>

namespace altfreeze {

Clip::Clip(std::size_t channels, std::size_t frames, std::size_t height, std::size_t width,
           float fill)
    : data_({channels, frames, height, width}, fill) {}

Clip::Clip(Tensor<float> data) : data_(std::move(data)) {
  if (data_.rank() != 4) {
    throw std::invalid_argument("clip must be [C,L,H,W], got " + to_string(data_.shape()));
  }
}

std::span<float> Clip::plane(std::size_t c, std::size_t t) {
  return data_.values().subspan((c * frames() + t) * plane_size(), plane_size());
}

std::span<const float> Clip::plane(std::size_t c, std::size_t t) const {
  return data_.values().subspan((c * frames() + t) * plane_size(), plane_size());
}

void Clip::clamp_unit() {
  for (float& v : data_.values()) v = std::clamp(v, 0.0f, 1.0f);
}

Mask::Mask(std::size_t height, std::size_t width, float fill) : data_({height, width}, fill) {}

Mask::Mask(Tensor<float> data) : data_(std::move(data)) {
  if (data_.rank() != 2) {
    throw std::invalid_argument("mask must be [H,W], got " + to_string(data_.shape()));
  }
}

double Mask::coverage() const {
  const auto v = data_.values();
  const auto n = std::count_if(v.begin(), v.end(), [](float x) { return x > 0.5f; });
  return static_cast<double>(n) / static_cast<double>(v.size());
}

}  // namespace altfreeze
