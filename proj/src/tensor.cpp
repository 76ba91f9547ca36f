#include "pcmar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace pcmar {

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  std::size_t n = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] < 1) throw ShapeError("dimension " + std::to_string(i) + " of " + shape_str(shape) + " is zero");
    n *= shape[i];
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  return BasicTensor(std::move(shape), data_);
}

template <typename T>
void BasicTensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool BasicTensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void BasicTensor<T>::require_finite(const char* where) const {
  if (!all_finite()) throw ValueError(std::string("non-finite value produced by ") + where);
}

template <typename T>
bool bit_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(T)) == 0;
}

template <typename T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template bool bit_equal(const BasicTensor<float>&, const BasicTensor<float>&);
template bool bit_equal(const BasicTensor<double>&, const BasicTensor<double>&);
template float max_abs_diff(const BasicTensor<float>&, const BasicTensor<float>&);
template double max_abs_diff(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace pcmar
