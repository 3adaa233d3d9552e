// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "aagn/errors.hpp"

namespace aagn {

/// NCHW shape. Every tensor in the project is 4-D; vectors are (n, c, 1, 1),
/// matrices used by attention are (n, 1, rows, cols).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  [[nodiscard]] std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  [[nodiscard]] std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
           "," + std::to_string(w) + ")";
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Cache-line aligned storage. Vectorised reductions peel differently
/// depending on the start address, so alignment keeps results bitwise
/// reproducible from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n <= 0 || shape.c <= 0 || shape.h <= 0 || shape.w <= 0) {
      throw ShapeError("tensor dimensions must be positive, got " + shape.str());
    }
  }
  Tensor(Shape shape, const std::vector<T>& values)
      : Tensor(shape, AlignedVector<T>(values.begin(), values.end())) {}
  Tensor(Shape shape, AlignedVector<T> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape.numel()) {
      throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                       shape.str());
    }
  }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] T* data() { return data_.data(); }
  [[nodiscard]] const T* data() const { return data_.data(); }
  [[nodiscard]] std::span<T> span() { return data_; }
  [[nodiscard]] std::span<const T> span() const { return data_; }
  [[nodiscard]] AlignedVector<T>& values() { return data_; }
  [[nodiscard]] const AlignedVector<T>& values() const { return data_; }

  [[nodiscard]] std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  [[nodiscard]] const T& at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the start of plane (n, c).
  T* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  [[nodiscard]] const T* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same storage, new shape with equal element count.
  [[nodiscard]] Tensor reshaped(Shape s) const {
    if (s.numel() != shape_.numel()) {
      throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    }
    return Tensor(s, data_);
  }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    AlignedVector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  [[nodiscard]] T max_abs() const {
    T m = T(0);
    for (T v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{};
  AlignedVector<T> data_;
};

/// Throws ShapeError naming `what` unless the two shapes agree.
inline void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (!(a == b)) {
    throw ShapeError(what + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

}  // namespace aagn
