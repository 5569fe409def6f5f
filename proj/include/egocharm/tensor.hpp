#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "egocharm/error.hpp"

namespace egocharm {

/// Dense row-major array of rank 0..3. Sequences are stored channels x time.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  static constexpr std::size_t kMaxRank = 3;

  BasicTensor() = default;

  explicit BasicTensor(std::initializer_list<std::size_t> shape, T fill = T{}) { reset(std::span(shape.begin(), shape.size()), fill); }

  explicit BasicTensor(std::span<const std::size_t> shape, T fill = T{}) { reset(shape, fill); }

  static BasicTensor vector(std::vector<T> values) {
    BasicTensor t;
    t.rank_ = 1;
    t.shape_ = {values.size(), 1, 1};
    t.data_ = std::move(values);
    return t;
  }

  static BasicTensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
    require(values.size() == rows * cols, ErrorCode::ShapeMismatch, "matrix data does not match shape");
    BasicTensor t;
    t.rank_ = 2;
    t.shape_ = {rows, cols, 1};
    t.data_ = std::move(values);
    return t;
  }

  std::size_t rank() const noexcept { return rank_; }
  std::size_t dim(std::size_t axis) const noexcept { return axis < rank_ ? shape_[axis] : 1; }
  std::vector<std::size_t> shape() const { return {shape_.begin(), shape_.begin() + rank_}; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

  T& operator()(std::size_t a, std::size_t b, std::size_t c) noexcept { return data_[(a * shape_[1] + b) * shape_[2] + c]; }
  const T& operator()(std::size_t a, std::size_t b, std::size_t c) const noexcept {
    return data_[(a * shape_[1] + b) * shape_[2] + c];
  }

  /// Row view of a rank-2 tensor.
  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * shape_[1], shape_[1]}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * shape_[1], shape_[1]}; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const BasicTensor& other) const noexcept {
    if (rank_ != other.rank_) return false;
    for (std::size_t i = 0; i < rank_; ++i)
      if (shape_[i] != other.shape_[i]) return false;
    return true;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  BasicTensor& operator+=(const BasicTensor& other) {
    require(same_shape(other), ErrorCode::ShapeMismatch, "add: " + shape_string() + " vs " + other.shape_string());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  BasicTensor& operator*=(T scale) {
    for (auto& v : data_) v *= scale;
    return *this;
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < rank_; ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
  }

  /// Reinterpret with a new shape of identical element count.
  BasicTensor reshaped(std::initializer_list<std::size_t> shape) const {
    BasicTensor out = *this;
    std::size_t count = 1;
    for (auto d : shape) count *= d;
    require(count == data_.size(), ErrorCode::ShapeMismatch, "reshape changes element count");
    out.rank_ = shape.size();
    out.shape_ = {1, 1, 1};
    std::copy(shape.begin(), shape.end(), out.shape_.begin());
    return out;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(std::span<const std::size_t>(shape_.data(), rank_));
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) { return a.same_shape(b) && a.data_ == b.data_; }

 private:
  void reset(std::span<const std::size_t> shape, T fill) {
    require(shape.size() <= kMaxRank, ErrorCode::ShapeMismatch, "tensor rank above 3");
    rank_ = shape.size();
    shape_ = {1, 1, 1};
    std::size_t count = 1;
    for (std::size_t i = 0; i < rank_; ++i) {
      shape_[i] = shape[i];
      count *= shape[i];
    }
    data_.assign(count, fill);
  }

  std::size_t rank_ = 0;
  std::array<std::size_t, kMaxRank> shape_{1, 1, 1};
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;

}  // namespace egocharm
