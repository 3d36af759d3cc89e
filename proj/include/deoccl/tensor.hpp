#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "deoccl/error.hpp"

namespace deoccl {

// Dense NCHW extent. Vectors are stored as N x F x 1 x 1.
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T* sample(int i) { return data_.data() + i * shape_.sample_size(); }
  const T* sample(int i) const { return data_.data() + i * shape_.sample_size(); }

  T& at(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  T at(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Same storage, new extent; element count must agree.
  Tensor reshaped(Shape4 s) const {
    require(s.size() == shape_.size(), ErrorKind::shape_mismatch,
            "cannot reshape " + to_string(shape_) + " to " + to_string(s));
    Tensor out;
    out.shape_ = s;
    out.data_ = data_;
    return out;
  }

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  Tensor<To> out(src.shape());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
  return out;
}

inline void require_same_shape(const Shape4& a, const Shape4& b, const std::string& what) {
  require(a == b, ErrorKind::shape_mismatch,
          what + ": " + to_string(a) + " vs " + to_string(b));
}

}  // namespace deoccl
