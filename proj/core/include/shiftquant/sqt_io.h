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

// SQT1 binary tensor container.
//
//   offset  size        field
//   0       4           magic "SQT1"
//   4       1           dtype (0 f32, 1 f64, 2 i8, 3 i16, 4 i32)
//   5       1           rank
//   6       8 * rank    extents, little-endian uint64
//   ...     numel * w   payload, little-endian, row-major

#ifndef SHIFTQUANT_SQT_IO_H_
#define SHIFTQUANT_SQT_IO_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <variant>

#include "shiftquant/tensor.h"

namespace shiftquant {

enum class DType : std::uint8_t {
  kF32 = 0,
  kF64 = 1,
  kI8 = 2,
  kI16 = 3,
  kI32 = 4,
};

std::size_t dtype_width(DType dtype);
bool is_integer_dtype(DType dtype);

struct SqtRecord {
  DType dtype = DType::kF64;
  std::variant<DenseTensor, IntTensor> tensor;
};

// Real tensors may be stored as f32 or f64 (f32 rounds). Integer tensors as
// i8/i16/i32; values outside the chosen width raise FormatError.
void write_sqt(std::ostream& out, const DenseTensor& t,
               DType dtype = DType::kF64);
void write_sqt(std::ostream& out, const IntTensor& t,
               DType dtype = DType::kI32);
SqtRecord read_sqt(std::istream& in);

void save_sqt(const std::filesystem::path& path, const DenseTensor& t,
              DType dtype = DType::kF64);
void save_sqt(const std::filesystem::path& path, const IntTensor& t,
              DType dtype = DType::kI32);
SqtRecord load_sqt(const std::filesystem::path& path);

// Typed loaders; an integer file loaded as dense is widened, a real file
// loaded as integer is rejected.
DenseTensor load_dense(const std::filesystem::path& path);
IntTensor load_int(const std::filesystem::path& path);

// Narrowest integer dtype holding every value of `t`.
DType narrowest_int_dtype(const IntTensor& t);

}  // namespace shiftquant

#endif  // SHIFTQUANT_SQT_IO_H_
