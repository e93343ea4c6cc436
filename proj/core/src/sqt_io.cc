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

#include "shiftquant/sqt_io.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace shiftquant {
namespace {

constexpr std::array<char, 4> kMagic = {'S', 'Q', 'T', '1'};
constexpr std::size_t kMaxRank = 16;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

void put_le(std::ostream& out, std::uint64_t bits, std::size_t width) {
  char buf[8];
  for (std::size_t i = 0; i < width; ++i) {
    buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  }
  out.write(buf, static_cast<std::streamsize>(width));
}

std::uint64_t get_le(std::istream& in, std::size_t width) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(width));
  if (in.gcount() != static_cast<std::streamsize>(width)) {
    throw FormatError("SQT1: truncated file");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < width; ++i) {
    bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return bits;
}

void write_header(std::ostream& out, DType dtype, const Shape& shape) {
  if (shape.empty()) throw FormatError("SQT1: cannot write an empty tensor");
  if (shape.rank() > kMaxRank) throw FormatError("SQT1: rank too large");
  out.write(kMagic.data(), kMagic.size());
  put_le(out, static_cast<std::uint8_t>(dtype), 1);
  put_le(out, shape.rank(), 1);
  for (std::size_t d : shape.dims()) put_le(out, d, 8);
}

std::int64_t sign_extend(std::uint64_t bits, std::size_t width) {
  const unsigned shift = static_cast<unsigned>(64 - 8 * width);
  return static_cast<std::int64_t>(bits << shift) >> shift;
}

void check_ok(std::ostream& out) {
  if (!out) throw FormatError("SQT1: write failed");
}

}  // namespace

std::size_t dtype_width(DType dtype) {
  switch (dtype) {
    case DType::kF32:
      return 4;
    case DType::kF64:
      return 8;
    case DType::kI8:
      return 1;
    case DType::kI16:
      return 2;
    case DType::kI32:
      return 4;
  }
  throw FormatError("SQT1: unknown dtype");
}

bool is_integer_dtype(DType dtype) {
  return dtype == DType::kI8 || dtype == DType::kI16 || dtype == DType::kI32;
}

void write_sqt(std::ostream& out, const DenseTensor& t, DType dtype) {
  if (dtype != DType::kF32 && dtype != DType::kF64) {
    throw FormatError("SQT1: real tensor needs dtype f32 or f64");
  }
  write_header(out, dtype, t.shape());
  for (double v : t.data()) {
    if (dtype == DType::kF64) {
      put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    } else {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    }
  }
  check_ok(out);
}

void write_sqt(std::ostream& out, const IntTensor& t, DType dtype) {
  if (!is_integer_dtype(dtype)) {
    throw FormatError("SQT1: integer tensor needs dtype i8, i16 or i32");
  }
  const std::size_t width = dtype_width(dtype);
  const std::int64_t hi = (std::int64_t{1} << (8 * width - 1)) - 1;
  const std::int64_t lo = -hi - 1;
  for (std::int32_t v : t.data()) {
    if (v < lo || v > hi) {
      throw FormatError("SQT1: value " + std::to_string(v) +
                        " does not fit the requested dtype");
    }
  }
  write_header(out, dtype, t.shape());
  for (std::int32_t v : t.data()) {
    put_le(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(v)),
           width);
  }
  check_ok(out);
}

SqtRecord read_sqt(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic) {
    throw FormatError("SQT1: bad magic");
  }
  const auto code = get_le(in, 1);
  if (code > static_cast<std::uint64_t>(DType::kI32)) {
    throw FormatError("SQT1: unknown dtype code " + std::to_string(code));
  }
  const auto dtype = static_cast<DType>(code);
  const auto rank = get_le(in, 1);
  if (rank == 0 || rank > kMaxRank) {
    throw FormatError("SQT1: invalid rank " + std::to_string(rank));
  }
  std::vector<std::size_t> dims(rank);
  std::uint64_t numel = 1;
  for (auto& d : dims) {
    const std::uint64_t extent = get_le(in, 8);
    if (extent == 0 || extent > kMaxElements) {
      throw FormatError("SQT1: invalid extent");
    }
    numel *= extent;
    if (numel > kMaxElements) throw FormatError("SQT1: tensor too large");
    d = static_cast<std::size_t>(extent);
  }
  Shape shape(std::move(dims));
  const std::size_t width = dtype_width(dtype);

  SqtRecord rec;
  rec.dtype = dtype;
  if (is_integer_dtype(dtype)) {
    std::vector<std::int32_t> data(numel);
    for (auto& v : data) {
      v = static_cast<std::int32_t>(sign_extend(get_le(in, width), width));
    }
    rec.tensor = IntTensor(std::move(shape), std::move(data));
  } else {
    std::vector<double> data(numel);
    for (auto& v : data) {
      if (dtype == DType::kF64) {
        v = std::bit_cast<double>(get_le(in, 8));
      } else {
        v = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(in, 4)));
      }
    }
    rec.tensor = DenseTensor(std::move(shape), std::move(data));
  }
  return rec;
}

void save_sqt(const std::filesystem::path& path, const DenseTensor& t,
              DType dtype) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_sqt(out, t, dtype);
}

void save_sqt(const std::filesystem::path& path, const IntTensor& t,
              DType dtype) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_sqt(out, t, dtype);
}

SqtRecord load_sqt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_sqt(in);
}

DenseTensor load_dense(const std::filesystem::path& path) {
  SqtRecord rec = load_sqt(path);
  if (auto* dense = std::get_if<DenseTensor>(&rec.tensor)) {
    return std::move(*dense);
  }
  const auto& ints = std::get<IntTensor>(rec.tensor);
  std::vector<double> data(ints.data().begin(), ints.data().end());
  return DenseTensor(ints.shape(), std::move(data));
}

IntTensor load_int(const std::filesystem::path& path) {
  SqtRecord rec = load_sqt(path);
  if (auto* ints = std::get_if<IntTensor>(&rec.tensor)) {
    return std::move(*ints);
  }
  throw FormatError(path.string() + ": expected an integer tensor");
}

DType narrowest_int_dtype(const IntTensor& t) {
  std::int32_t lo = 0, hi = 0;
  for (std::int32_t v : t.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo >= std::numeric_limits<std::int8_t>::min() &&
      hi <= std::numeric_limits<std::int8_t>::max()) {
    return DType::kI8;
  }
  if (lo >= std::numeric_limits<std::int16_t>::min() &&
      hi <= std::numeric_limits<std::int16_t>::max()) {
    return DType::kI16;
  }
  return DType::kI32;
}

}  // namespace shiftquant
