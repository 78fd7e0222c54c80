#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "uad/errors.hpp"

namespace uad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string to_string(const Shape& shape);

/// Dense row-major array. Extents are always >= 1.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != numel(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + to_string(shape_));
    }
  }

  Tensor(Shape shape, std::initializer_list<T> data) : Tensor(std::move(shape), std::vector<T>(data)) {}

  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T item() const {
    if (data_.size() != 1) throw UsageError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor&) const = default;

 private:
  void validate_shape() const {
    if (shape_.empty()) throw DimensionError("tensor rank must be >= 1");
    for (auto e : shape_) {
      if (e == 0) throw DimensionError("tensor extents must be >= 1, got " + to_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

inline std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace uad
