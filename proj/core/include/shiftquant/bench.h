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

// Wall-clock comparison of the matmul backends on one set of random
// operands per size.
//
//   shiftmm         ShiftQuant A (grouped along K) x per-tensor B, shifts
//                   applied during accumulation
//   grouped_gemm    same operands, one GEMM per shift class
//   per_tensor_int  per-tensor A x per-tensor B, plain integer GEMM
//   float_ref       double GEMM of the dequantized ShiftQuant operands
//
// Before anything is timed, the shiftmm and grouped_gemm accumulators must
// be identical and every integer backend must dequantize to its float
// reference; otherwise CorrectnessError and no timings.

#ifndef SHIFTQUANT_BENCH_H_
#define SHIFTQUANT_BENCH_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace shiftquant {

enum class Backend { kShiftMM, kGroupedGemm, kPerTensorInt, kFloatRef };

std::string to_string(Backend backend);
Backend backend_from_string(const std::string& name);

struct MatmulSize {
  std::size_t m = 0, k = 0, n = 0;
};

// "MxKxN", each extent >= 1; ParseError otherwise.
MatmulSize parse_matmul_size(const std::string& text);

inline constexpr std::size_t kMinRepeats = 10;
inline constexpr std::size_t kWarmups = 3;

struct BenchRequest {
  std::vector<MatmulSize> sizes;
  int bitwidth = 4;
  std::size_t n_groups = 4;
  std::vector<Backend> backends = {Backend::kShiftMM, Backend::kGroupedGemm,
                                   Backend::kPerTensorInt, Backend::kFloatRef};
  std::size_t repeats = kMinRepeats;
  std::uint64_t seed = 0;

  // ConfigError for repeats < 10, empty sizes/backends or bad bitwidth /
  // n_groups.
  void validate() const;
};

struct BenchReport {
  Backend backend = Backend::kShiftMM;
  MatmulSize size;
  int bitwidth = 0;
  std::size_t n_groups = 0;
  std::size_t repeats = 0;
  double median_seconds = 0.0;
  double min_seconds = 0.0;
  std::size_t rearrangement_bytes = 0;
  // FNV-1a over the little-endian output words (int64 accumulators, or the
  // IEEE bits of the float reference).
  std::uint64_t checksum = 0;
};

std::uint64_t fnv1a64(std::span<const std::int64_t> words);

// One report per (size, backend) in request order.
std::vector<BenchReport> run_bench(const BenchRequest& request);

// Columns: m, k, n, backend, bitwidth, n_groups, seed, repeats,
// median_seconds, min_seconds, rearrangement_bytes, checksum.
void write_bench_csv(std::ostream& out, const std::vector<BenchReport>& rows,
                     std::uint64_t seed);

}  // namespace shiftquant

#endif  // SHIFTQUANT_BENCH_H_
