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

#include "shiftquant/tensor.h"

#include <sstream>

namespace shiftquant {

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) {
    throw DimensionError("shape must have at least one extent");
  }
  numel_ = 1;
  for (std::size_t d : dims_) {
    if (d == 0) throw DimensionError("shape extents must be >= 1");
    numel_ *= d;
  }
}

std::string Shape::to_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) out << 'x';
    out << dims_[i];
  }
  out << ']';
  return out.str();
}

std::vector<std::size_t> channel_index_map(const Shape& shape,
                                           std::size_t axis) {
  if (axis >= shape.rank()) {
    throw DimensionError("channel axis " + std::to_string(axis) +
                         " out of range for shape " + shape.to_string());
  }
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < shape.rank(); ++a) inner *= shape[a];
  std::vector<std::size_t> map(shape.numel());
  for (std::size_t i = 0; i < map.size(); ++i) {
    map[i] = (i / inner) % shape[axis];
  }
  return map;
}

DenseTensor matmul_ref(const DenseTensor& a, const DenseTensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul_ref: incompatible shapes " +
                         a.shape().to_string() + " and " +
                         b.shape().to_string());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out[i * n + j] = acc;
    }
  }
  return DenseTensor(Shape{m, n}, std::move(out));
}

DenseTensor identity(std::size_t n) {
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] = 1.0;
  return DenseTensor(Shape{n, n}, std::move(out));
}

}  // namespace shiftquant
