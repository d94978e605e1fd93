#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "parconv/errors.hpp"

namespace parconv {

/// Dense n-dimensional array, contiguous row-major storage.
/// Activations use N x C x H x W, convolution weights O x (I/g) x K x K.
/// T is float in production; tests instantiate double for tight tolerances.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(compute_numel(shape_)), T{0});
  }

  TensorT(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (compute_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  static TensorT zeros(std::vector<int> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<int> shape, T value) {
    TensorT t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const {
    return data_[static_cast<std::size_t>(i)];
  }

  /// 4-d accessor for NCHW / OIKK layouts.
  T& at(int a, int b, int c, int d) {
    return data_[static_cast<std::size_t>(index4(a, b, c, d))];
  }
  const T& at(int a, int b, int c, int d) const {
    return data_[static_cast<std::size_t>(index4(a, b, c, d))];
  }

  T& at(int a, int b) {
    return data_[static_cast<std::size_t>(
        static_cast<std::int64_t>(a) * shape_[1] + b)];
  }
  const T& at(int a, int b) const {
    return data_[static_cast<std::size_t>(
        static_cast<std::int64_t>(a) * shape_[1] + b)];
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(out));
  }

  static std::string shape_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i > 0) os << ", ";
      os << s[i];
    }
    os << ')';
    return os.str();
  }

  std::string shape_string() const { return shape_string(shape_); }

 private:
  static std::int64_t compute_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (const int d : shape) {
      if (d <= 0) throw ShapeError("non-positive dimension in " + shape_string(shape));
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

  std::int64_t index4(int a, int b, int c, int d) const {
    return ((static_cast<std::int64_t>(a) * shape_[1] + b) * shape_[2] + c) *
               shape_[3] +
           d;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;

}  // namespace parconv
