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

#include "shiftquant/bench.h"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>

#include "shiftquant/quantizer.h"
#include "shiftquant/random.h"
#include "shiftquant/shiftmm.h"
#include "shiftquant/text.h"

namespace shiftquant {
namespace {

struct Operands {
  QuantizedTensor a_grouped, a_tensor, b;
  DenseTensor a_grouped_deq, a_tensor_deq, b_deq;
};

// A has columns whose ranges span n_groups octaves so every group is used.
Operands make_operands(const MatmulSize& s, const BenchRequest& req,
                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> a(s.m * s.k), b(s.k * s.n);
  for (std::size_t k = 0; k < s.k; ++k) {
    const double octave =
        static_cast<double>(k % req.n_groups) + rng.uniform();
    const double scale = std::exp2(-octave);
    for (std::size_t m = 0; m < s.m; ++m) {
      a[m * s.k + k] = scale * rng.normal();
    }
  }
  for (double& v : b) v = rng.normal();
  const DenseTensor at(Shape{s.m, s.k}, std::move(a));
  const DenseTensor bt(Shape{s.k, s.n}, std::move(b));

  QuantConfig cfg;
  cfg.bitwidth = req.bitwidth;
  cfg.seed = seed;
  Operands op;
  cfg.stream = 0;
  op.a_grouped = quantize_shiftquant(at, cfg, 1, req.n_groups);
  cfg.stream = 1;
  op.a_tensor = quantize(at, cfg, PerTensor{});
  cfg.stream = 2;
  op.b = quantize(bt, cfg, PerTensor{});
  op.a_grouped_deq = dequantize(op.a_grouped);
  op.a_tensor_deq = dequantize(op.a_tensor);
  op.b_deq = dequantize(op.b);
  return op;
}

std::uint64_t checksum_of(const DenseTensor& t) {
  std::vector<std::int64_t> words(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    words[i] = std::bit_cast<std::int64_t>(t[i]);
  }
  return fnv1a64(words);
}

void check_close(const DenseTensor& got, const DenseTensor& want,
                 const char* what) {
  double scale = 0.0;
  for (double v : want.data()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < got.numel(); ++i) {
    if (std::abs(got[i] - want[i]) > 1e-10 * std::max(scale, 1e-300)) {
      throw CorrectnessError(std::string(what) +
                             " disagrees with the float reference at flat "
                             "index " + std::to_string(i));
    }
  }
}

struct Timing {
  double median = 0.0;
  double min = 0.0;
};

Timing time_it(std::size_t repeats, const std::function<std::uint64_t()>& fn) {
  volatile std::uint64_t sink = 0;
  for (std::size_t i = 0; i < kWarmups; ++i) sink = sink + fn();
  std::vector<double> t(repeats);
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    sink = sink + fn();
    const auto stop = std::chrono::steady_clock::now();
    t[i] = std::chrono::duration<double>(stop - start).count();
  }
  std::sort(t.begin(), t.end());
  const std::size_t h = repeats / 2;
  const double median = repeats % 2 ? t[h] : 0.5 * (t[h - 1] + t[h]);
  return {median, t.front()};
}

}  // namespace

std::string to_string(Backend backend) {
  switch (backend) {
    case Backend::kShiftMM:
      return "shiftmm";
    case Backend::kGroupedGemm:
      return "grouped_gemm";
    case Backend::kPerTensorInt:
      return "per_tensor_int";
    case Backend::kFloatRef:
      return "float_ref";
  }
  return "?";
}

Backend backend_from_string(const std::string& name) {
  for (Backend b : {Backend::kShiftMM, Backend::kGroupedGemm,
                    Backend::kPerTensorInt, Backend::kFloatRef}) {
    if (to_string(b) == name) return b;
  }
  throw ConfigError("unknown backend '" + name + "'");
}

MatmulSize parse_matmul_size(const std::string& text) {
  const std::vector<std::string> parts = split(text, 'x');
  if (parts.size() != 3) {
    throw ParseError("size '" + text + "' is not MxKxN", 0);
  }
  std::size_t v[3];
  for (int i = 0; i < 3; ++i) {
    const auto p = parse_uint(parts[i]);
    if (!p || *p == 0 || *p > (std::uint64_t{1} << 20)) {
      throw ParseError("bad extent '" + parts[i] + "' in size '" + text + "'",
                       0);
    }
    v[i] = static_cast<std::size_t>(*p);
  }
  return {v[0], v[1], v[2]};
}

void BenchRequest::validate() const {
  if (sizes.empty()) throw ConfigError("no sizes to benchmark");
  if (backends.empty()) throw ConfigError("no backends to benchmark");
  if (repeats < kMinRepeats) {
    throw ConfigError("repeats must be >= " + std::to_string(kMinRepeats) +
                      ", got " + std::to_string(repeats));
  }
  if (n_groups < 1 || n_groups > kMaxGroups) {
    throw ConfigError("n_groups must be in [1, 63]");
  }
  QuantConfig q;
  q.bitwidth = bitwidth;
  q.validate();
}

std::uint64_t fnv1a64(std::span<const std::int64_t> words) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::int64_t w : words) {
    auto u = static_cast<std::uint64_t>(w);
    for (int byte = 0; byte < 8; ++byte) {
      h ^= u & 0xFF;
      h *= 0x100000001B3ULL;
      u >>= 8;
    }
  }
  return h;
}

std::vector<BenchReport> run_bench(const BenchRequest& req) {
  req.validate();
  std::vector<BenchReport> out;
  for (std::size_t si = 0; si < req.sizes.size(); ++si) {
    const MatmulSize& s = req.sizes[si];
    const Operands op = make_operands(s, req, mix64(req.seed + si));

    // Correctness gate.
    const ShiftMMResult fast = shiftmm(op.a_grouped, op.b);
    const ShiftMMResult grouped = grouped_gemm(op.a_grouped, op.b);
    const ShiftMMResult plain = shiftmm(op.a_tensor, op.b);
    if (fast.accumulators != grouped.accumulators) {
      throw CorrectnessError("shiftmm and grouped_gemm accumulators differ "
                             "for size " + std::to_string(s.m) + "x" +
                             std::to_string(s.k) + "x" + std::to_string(s.n));
    }
    const DenseTensor ref = matmul_ref(op.a_grouped_deq, op.b_deq);
    check_close(fast.dequantize(), ref, "shiftmm");
    check_close(plain.dequantize(), matmul_ref(op.a_tensor_deq, op.b_deq),
                "per_tensor_int");

    for (Backend backend : req.backends) {
      BenchReport r;
      r.backend = backend;
      r.size = s;
      r.bitwidth = req.bitwidth;
      r.n_groups = req.n_groups;
      r.repeats = req.repeats;
      Timing t;
      switch (backend) {
        case Backend::kShiftMM:
          r.rearrangement_bytes = fast.rearrangement_bytes;
          r.checksum = fnv1a64(fast.accumulators.data());
          t = time_it(req.repeats, [&] {
            return static_cast<std::uint64_t>(
                shiftmm(op.a_grouped, op.b).accumulators[0]);
          });
          break;
        case Backend::kGroupedGemm:
          r.rearrangement_bytes = grouped.rearrangement_bytes;
          r.checksum = fnv1a64(grouped.accumulators.data());
          t = time_it(req.repeats, [&] {
            return static_cast<std::uint64_t>(
                grouped_gemm(op.a_grouped, op.b).accumulators[0]);
          });
          break;
        case Backend::kPerTensorInt:
          r.checksum = fnv1a64(plain.accumulators.data());
          t = time_it(req.repeats, [&] {
            return static_cast<std::uint64_t>(
                shiftmm(op.a_tensor, op.b).accumulators[0]);
          });
          break;
        case Backend::kFloatRef:
          r.checksum = checksum_of(ref);
          t = time_it(req.repeats, [&] {
            return std::bit_cast<std::uint64_t>(
                matmul_ref(op.a_grouped_deq, op.b_deq)[0]);
          });
          break;
      }
      r.median_seconds = t.median;
      r.min_seconds = t.min;
      out.push_back(r);
    }
  }
  return out;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchReport>& rows,
                     std::uint64_t seed) {
  CsvWriter csv(out, {"m", "k", "n", "backend", "bitwidth", "n_groups", "seed",
                      "repeats", "median_seconds", "min_seconds",
                      "rearrangement_bytes", "checksum"});
  for (const BenchReport& r : rows) {
    csv.row({format_uint(r.size.m), format_uint(r.size.k),
             format_uint(r.size.n), to_string(r.backend),
             format_int(r.bitwidth), format_uint(r.n_groups),
             format_uint(seed), format_uint(r.repeats),
             format_double(r.median_seconds), format_double(r.min_seconds),
             format_uint(r.rearrangement_bytes), format_uint(r.checksum)});
  }
}

}  // namespace shiftquant
