/*
 * Copyright 2026 The nmn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nmn/error.hpp"

namespace nmn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor of rank 0..4. Rank 0 holds a single value.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T{0}) {}

  explicit Tensor(Shape dims, T fill = T{0})
      : dims_(std::move(dims)), data_(shape_size(dims_), fill) {
    check_rank();
  }

  Tensor(Shape dims, std::vector<T> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    check_rank();
    if (data_.size() != shape_size(dims_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + nmn::to_string(dims_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t y, std::size_t x) { return data_[y * dims_[1] + x]; }
  const T& at(std::size_t y, std::size_t x) const {
    return data_[y * dims_[1] + x];
  }
  T& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * dims_[1] + x) * dims_[2] + c];
  }
  const T& at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * dims_[1] + x) * dims_[2] + c];
  }

  T item() const {
    if (data_.size() != 1) {
      throw ShapeError("item() on tensor with dims " + nmn::to_string(dims_));
    }
    return data_[0];
  }

  // Same values, new dims of equal element count.
  Tensor reshaped(Shape dims) const {
    if (shape_size(dims) != data_.size()) {
      throw ShapeError("cannot reshape " + nmn::to_string(dims_) + " to " +
                       nmn::to_string(dims));
    }
    return Tensor(std::move(dims), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(dims_, std::move(out));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  void check_rank() const {
    if (dims_.size() > 4) {
      throw ShapeError("tensor rank " + std::to_string(dims_.size()) +
                       " exceeds 4");
    }
    for (std::size_t d : dims_) {
      if (d == 0) {
        throw ShapeError("zero-length dimension in " + nmn::to_string(dims_));
      }
    }
  }

  Shape dims_;
  std::vector<T> data_;
};

inline void require_same_dims(const Shape& a, const Shape& b,
                              const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": dims " + to_string(a) + " vs " +
                     to_string(b));
  }
}

}  // namespace nmn
