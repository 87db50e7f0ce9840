#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace altfreeze {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array. The element count always equals the product of
/// the extents; every extent is positive.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  /// Same values under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(T value);
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> values_;
};

/// Exact bitwise comparison of shape and every stored value.
template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace altfreeze
