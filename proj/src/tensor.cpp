#include "altfreeze/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace altfreeze {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw std::invalid_argument("tensor extent " + std::to_string(i) +
                                  " is zero in shape " + to_string(shape));
    }
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  values_.assign(numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_extents(shape_);
  if (values_.size() != numel(shape_)) {
    throw std::invalid_argument("tensor of shape " + to_string(shape_) + " needs " +
                                std::to_string(numel(shape_)) + " values, got " +
                                std::to_string(values_.size()));
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (numel(shape) != values_.size()) {
    throw std::invalid_argument("cannot reshape " + to_string(shape_) + " to " +
                                to_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(values_.begin(), values_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template class Tensor<float>;
template class Tensor<double>;
template bool bitwise_equal(const Tensor<float>&, const Tensor<float>&);
template bool bitwise_equal(const Tensor<double>&, const Tensor<double>&);

}  // namespace altfreeze
