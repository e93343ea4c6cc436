// Copyright 2026 The ShiftQuant Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major tensors and the 64-bit float reference kernels that the
// integer paths are checked against.

#ifndef SHIFTQUANT_TENSOR_H_
#define SHIFTQUANT_TENSOR_H_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iterator>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "shiftquant/errors.h"

namespace shiftquant {

// Row-major extents. Every extent is >= 1; only a default-constructed Shape
// is empty (rank 0, zero elements) and it marks "no tensor yet".
class Shape {
 public:
  Shape() = default;
  explicit Shape(std::vector<std::size_t> dims);
  Shape(std::initializer_list<std::size_t> dims)
      : Shape(std::vector<std::size_t>(dims)) {}

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t numel() const { return numel_; }
  bool empty() const { return dims_.empty(); }

  std::string to_string() const;

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.dims_ == b.dims_;
  }

 private:
  std::vector<std::size_t> dims_;
  std::size_t numel_ = 0;
};

// Immutable row-major tensor. Floating-point instantiations reject NaN/Inf
// at construction.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw DimensionError("tensor data length " +
                           std::to_string(data_.size()) +
                           " does not match shape " + shape_.to_string());
    }
    if constexpr (std::is_floating_point_v<T>) {
      for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
          throw DegenerateInputError("non-finite value at flat index " +
                                     std::to_string(i));
        }
      }
    }
  }

  static Tensor filled(const Shape& shape, T value) {
    return Tensor(shape, std::vector<T>(shape.numel(), value));
  }
  static Tensor zeros(const Shape& shape) { return filled(shape, T{}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }

  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const& { return data_; }
  // Rvalue overload so that iterating a temporary's values stays valid.
  std::vector<T> values() && { return std::move(data_); }
  T operator[](std::size_t flat) const { return data_[flat]; }

  // Two-dimensional accessor; the tensor must be rank 2.
  T at(std::size_t row, std::size_t col) const {
    return data_[row * shape_[1] + col];
  }

  Tensor reshaped(Shape shape) const {
    if (shape.numel() != numel()) {
      throw DimensionError("cannot reshape " + shape_.to_string() + " to " +
                           shape.to_string());
    }
    return Tensor(std::move(shape), data_);
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using DenseTensor = Tensor<double>;
using IntTensor = Tensor<std::int32_t>;
using AccTensor = Tensor<std::int64_t>;

// Position-based iterator over anything exposing size() and operator[].
template <typename Container>
class IndexIterator {
 public:
  using iterator_category = std::forward_iterator_tag;
  using difference_type = std::ptrdiff_t;
  using value_type = decltype(std::declval<const Container&>()[0]);
  using reference = value_type;
  using pointer = void;

  IndexIterator() = default;
  IndexIterator(const Container* owner, std::size_t index)
      : owner_(owner), index_(index) {}

  value_type operator*() const { return (*owner_)[index_]; }
  IndexIterator& operator++() {
    ++index_;
    return *this;
  }
  IndexIterator operator++(int) {
    IndexIterator old = *this;
    ++index_;
    return old;
  }
  friend bool operator==(const IndexIterator& a, const IndexIterator& b) {
    return a.index_ == b.index_ && a.owner_ == b.owner_;
  }

 private:
  const Container* owner_ = nullptr;
  std::size_t index_ = 0;
};

// One channel of a tensor along some axis, walked in row-major order of the
// remaining axes. Holds a pointer into the parent tensor's storage.
template <typename T>
class ChannelSlice {
 public:
  ChannelSlice(const T* base, std::size_t outer, std::size_t extent,
               std::size_t inner, std::size_t channel)
      : base_(base),
        outer_(outer),
        extent_(extent),
        inner_(inner),
        channel_(channel) {}

  std::size_t size() const { return outer_ * inner_; }
  T operator[](std::size_t j) const { return base_[flat_index(j)]; }

  // Flat index into the parent tensor of the slice's j-th element.
  std::size_t flat_index(std::size_t j) const {
    const std::size_t o = j / inner_;
    const std::size_t i = j % inner_;
    return (o * extent_ + channel_) * inner_ + i;
  }

  IndexIterator<ChannelSlice> begin() const { return {this, 0}; }
  IndexIterator<ChannelSlice> end() const { return {this, size()}; }

  std::vector<T> to_vector() const {
    std::vector<T> out(size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = (*this)[j];
    return out;
  }

 private:
  const T* base_;
  std::size_t outer_;
  std::size_t extent_;
  std::size_t inner_;
  std::size_t channel_;
};

template <typename T>
class ChannelView {
 public:
  ChannelView(const Tensor<T>& tensor, std::size_t axis) : tensor_(&tensor) {
    const Shape& shape = tensor.shape();
    if (axis >= shape.rank()) {
      throw DimensionError("channel axis " + std::to_string(axis) +
                           " out of range for shape " + shape.to_string());
    }
    extent_ = shape[axis];
    for (std::size_t a = 0; a < axis; ++a) outer_ *= shape[a];
    for (std::size_t a = axis + 1; a < shape.rank(); ++a) inner_ *= shape[a];
  }

  std::size_t size() const { return extent_; }
  std::size_t slice_length() const { return outer_ * inner_; }
  ChannelSlice<T> operator[](std::size_t channel) const {
    return ChannelSlice<T>(tensor_->data().data(), outer_, extent_, inner_,
                           channel);
  }

  // Channel index of a flat element position.
  std::size_t channel_of(std::size_t flat) const {
    return (flat / inner_) % extent_;
  }

  IndexIterator<ChannelView> begin() const { return {this, 0}; }
  IndexIterator<ChannelView> end() const { return {this, size()}; }

 private:
  const Tensor<T>* tensor_;
  std::size_t outer_ = 1;
  std::size_t extent_ = 1;
  std::size_t inner_ = 1;
};

template <typename T>
ChannelView<T> channel_view(const Tensor<T>& tensor, std::size_t axis) {
  return ChannelView<T>(tensor, axis);
}

// Channel index for each flat position of a tensor with `shape` along `axis`.
std::vector<std::size_t> channel_index_map(const Shape& shape,
                                           std::size_t axis);

// Exact triple-loop product in 64-bit floating point, k ascending.
DenseTensor matmul_ref(const DenseTensor& a, const DenseTensor& b);

// Materializing transpose of a rank-2 tensor.
template <typename T>
Tensor<T> transpose(const Tensor<T>& t) {
  if (t.rank() != 2) {
    throw DimensionError("transpose expects rank 2, got " +
                         t.shape().to_string());
  }
  const std::size_t rows = t.dim(0);
  const std::size_t cols = t.dim(1);
  std::vector<T> out(t.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = t.at(r, c);
  }
  return Tensor<T>(Shape{cols, rows}, std::move(out));
}

DenseTensor identity(std::size_t n);

}  // namespace shiftquant

#endif  // SHIFTQUANT_TENSOR_H_
