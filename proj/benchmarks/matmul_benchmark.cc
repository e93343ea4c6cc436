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

// Microbenchmarks of the integer matmul backends and the quantizer.
// Arguments: square size, group count.

#include <benchmark/benchmark.h>

#include <cmath>

#include "shiftquant/quantizer.h"
#include "shiftquant/random.h"
#include "shiftquant/shiftmm.h"

namespace sq = shiftquant;

namespace {

sq::DenseTensor spread_columns(std::size_t rows, std::size_t cols,
                               std::size_t octaves, std::uint64_t seed) {
  sq::Rng rng(seed);
  std::vector<double> v(rows * cols);
  for (std::size_t c = 0; c < cols; ++c) {
    const double scale = std::exp2(-static_cast<double>(c % octaves));
    for (std::size_t r = 0; r < rows; ++r) v[r * cols + c] = scale * rng.normal();
  }
  return sq::DenseTensor(sq::Shape{rows, cols}, std::move(v));
}

struct Operands {
  sq::QuantizedTensor a, b, a_plain;
};

Operands operands(std::size_t n, std::size_t groups) {
  sq::QuantConfig cfg;
  cfg.bitwidth = 4;
  Operands op;
  const sq::DenseTensor a = spread_columns(n, n, groups, 1);
  op.a = sq::quantize_shiftquant(a, cfg, 1, groups);
  op.a_plain = sq::quantize(a, cfg, sq::PerTensor{});
  cfg.stream = 1;
  op.b = sq::quantize(spread_columns(n, n, 1, 2), cfg, sq::PerTensor{});
  return op;
}

void BM_ShiftMM(benchmark::State& state) {
  const Operands op = operands(state.range(0), state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sq::shiftmm(op.a, op.b));
  }
}

void BM_GroupedGemm(benchmark::State& state) {
  const Operands op = operands(state.range(0), state.range(1));
  std::size_t bytes = 0;
  for (auto _ : state) {
    const sq::ShiftMMResult r = sq::grouped_gemm(op.a, op.b);
    bytes = r.rearrangement_bytes;
    benchmark::DoNotOptimize(r);
  }
  state.counters["rearranged_bytes"] = static_cast<double>(bytes);
}

void BM_PerTensorInt(benchmark::State& state) {
  const Operands op = operands(state.range(0), state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sq::shiftmm(op.a_plain, op.b));
  }
}

void BM_QuantizeShiftQuant(benchmark::State& state) {
  const sq::DenseTensor a =
      spread_columns(state.range(0), state.range(0), state.range(1), 3);
  sq::QuantConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sq::quantize_shiftquant(a, cfg, 1, state.range(1)));
    ++cfg.stream;
  }
}

#define SIZES Args({64, 4})->Args({128, 4})->Args({256, 4})->Args({256, 1})
BENCHMARK(BM_ShiftMM)->SIZES;
BENCHMARK(BM_GroupedGemm)->SIZES;
BENCHMARK(BM_PerTensorInt)->SIZES;
BENCHMARK(BM_QuantizeShiftQuant)->SIZES;

}  // namespace

BENCHMARK_MAIN();
