#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pcmar/error.hpp"

namespace pcmar {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array with shape metadata.
///
/// Instantiated for float (production) and double (gradient checking). The
/// element count always equals the product of the shape; every dimension is
/// at least 1.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : shape_{1}, data_(1, T{0}) {}
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor zeros_like(const BasicTensor& other) { return BasicTensor(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  const T* ptr() const noexcept { return data_.data(); }
  T* ptr() noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // 2D and 4D accessors (row-major).
  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same data under a new shape with equal element count.
  BasicTensor reshaped(Shape shape) const;

  void fill(T v);
  bool all_finite() const noexcept;
  /// Throws ValueError naming `where` if any element is NaN or infinite.
  void require_finite(const char* where) const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool operator==(const BasicTensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Bitwise equality of shapes and payloads (distinguishes -0 and +0).
template <typename T>
bool bit_equal(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace pcmar
