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

#include "shiftquant/shiftmm.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <string>

namespace shiftquant {
namespace {

double inverse(double scale) { return scale == 0.0 ? 0.0 : 1.0 / scale; }

// How one operand's scale decomposes around the inner axis.
struct OperandLayout {
  double scalar = 1.0;        // inverse of the scalar part of the scale
  std::vector<double> outer;  // inverse factor per non-inner index
  std::vector<int> shifts;    // per inner index; empty when not grouped
  int exponent = 0;           // 2^-exponent folded into the output scale
};

OperandLayout analyze(const QuantizedTensor& q, std::size_t inner_axis,
                      const char* name) {
  if (q.values.rank() != 2) {
    throw DimensionError(std::string(name) + " must be rank 2, got " +
                         q.values.shape().to_string());
  }
  if (!q.symmetric()) {
    throw GranularityError(std::string(name) +
                           " has zero points; integer matmul needs "
                           "symmetric operands");
  }
  const std::size_t outer_axis = 1 - inner_axis;
  OperandLayout layout;
  layout.outer.assign(q.values.dim(outer_axis), 1.0);

  switch (q.kind) {
    case GranularityKind::kPerTensor:
      layout.scalar = inverse(q.scales.at(0));
      break;
    case GranularityKind::kPerChannel:
      if (*q.axis == inner_axis) {
        throw GranularityError(std::string(name) +
                               " has per-channel scales on the inner axis");
      }
      for (std::size_t c = 0; c < layout.outer.size(); ++c) {
        layout.outer[c] = inverse(q.scales.at(c));
      }
      break;
    case GranularityKind::kShiftQuant: {
      const GroupPlan& plan = *q.plan;
      layout.scalar = inverse(q.scales.at(0));
      if (*q.axis == inner_axis) {
        layout.shifts.resize(plan.channels());
        for (std::size_t k = 0; k < plan.channels(); ++k) {
          layout.shifts[k] = plan.shift_of(k);
        }
        layout.exponent = static_cast<int>(plan.n_groups) - 1;
      } else {
        for (std::size_t c = 0; c < layout.outer.size(); ++c) {
          layout.outer[c] = std::ldexp(1.0, -plan.group_of_channel[c]);
        }
      }
      break;
    }
  }
  return layout;
}

struct Prepared {
  std::size_t m = 0, k = 0, n = 0;
  OperandLayout a, b;
  std::vector<int> shifts;  // per k, both operands combined
};

Prepared prepare(const QuantizedTensor& a, const QuantizedTensor& b) {
  Prepared p;
  p.a = analyze(a, 1, "left operand");
  p.b = analyze(b, 0, "right operand");
  p.m = a.values.dim(0);
  p.k = a.values.dim(1);
  p.n = b.values.dim(1);
  if (b.values.dim(0) != p.k) {
    throw DimensionError("inner extents differ: " +
                         a.values.shape().to_string() + " x " +
                         b.values.shape().to_string());
  }
  p.shifts.assign(p.k, 0);
  for (std::size_t i = 0; i < p.k; ++i) {
    if (!p.a.shifts.empty()) p.shifts[i] += p.a.shifts[i];
    if (!p.b.shifts.empty()) p.shifts[i] += p.b.shifts[i];
  }
  check_accumulator_capacity(a.bitwidth, b.bitwidth, p.k,
                             p.a.exponent + p.b.exponent);
  return p;
}

ShiftMMResult make_result(const Prepared& p, std::vector<std::int64_t> acc,
                          std::size_t bytes) {
  ShiftMMResult r;
  r.accumulators = AccTensor(Shape{p.m, p.n}, std::move(acc));
  r.combined_scale =
      std::ldexp(p.a.scalar * p.b.scalar, -(p.a.exponent + p.b.exponent));
  r.row_scales = p.a.outer;
  r.col_scales = p.b.outer;
  r.rearrangement_bytes = bytes;
  return r;
}

// acc[m, n] += (a[m, k] * b[k, n]) << shift for row-major a [M x K],
// b [K x N].
void int_gemm_shifted(const std::int32_t* a, const std::int32_t* b,
                      std::size_t m_ext, std::size_t k_ext, std::size_t n_ext,
                      int shift, std::int64_t* acc) {
  std::vector<std::int64_t> partial(n_ext);
  for (std::size_t m = 0; m < m_ext; ++m) {
    std::fill(partial.begin(), partial.end(), 0);
    for (std::size_t k = 0; k < k_ext; ++k) {
      const std::int64_t av = a[m * k_ext + k];
      if (av == 0) continue;
      const std::int32_t* brow = b + k * n_ext;
      for (std::size_t n = 0; n < n_ext; ++n) partial[n] += av * brow[n];
    }
    std::int64_t* out = acc + m * n_ext;
    for (std::size_t n = 0; n < n_ext; ++n) out[n] += partial[n] << shift;
  }
}

void check_plan(const QuantizedTensor& a, const GroupPlan& plan) {
  if (a.kind != GranularityKind::kShiftQuant || a.axis != std::size_t{1} ||
      !a.plan || *a.plan != plan) {
    throw DimensionError(
        "left operand is not grouped along the inner axis by the given plan");
  }
}

}  // namespace

DenseTensor ShiftMMResult::dequantize() const {
  const std::size_t rows = accumulators.dim(0);
  const std::size_t cols = accumulators.dim(1);
  std::vector<double> out(accumulators.numel());
  for (std::size_t m = 0; m < rows; ++m) {
    for (std::size_t n = 0; n < cols; ++n) {
      out[m * cols + n] =
          static_cast<double>(accumulators.at(m, n)) * combined_scale *
          row_scales[m] * col_scales[n];
    }
  }
  return DenseTensor(accumulators.shape(), std::move(out));
}

void check_accumulator_capacity(int bits_a, int bits_b, std::size_t k,
                                int max_shift) {
  const int log2_k = k <= 1 ? 0 : static_cast<int>(std::bit_width(k - 1));
  const int needed = bits_a + bits_b + log2_k + max_shift;
  if (needed > 63) {
    throw CapacityError("accumulation needs " + std::to_string(needed) +
                        " bits (" + std::to_string(bits_a) + " + " +
                        std::to_string(bits_b) + " + ceil(log2 " +
                        std::to_string(k) + ") + shift " +
                        std::to_string(max_shift) + "), limit is 63");
  }
}

std::vector<int> inner_shifts(const QuantizedTensor& a,
                              const QuantizedTensor& b) {
  return prepare(a, b).shifts;
}

ShiftMMResult shiftmm(const QuantizedTensor& a, const QuantizedTensor& b) {
  const Prepared p = prepare(a, b);
  const std::int32_t* av = a.values.data().data();
  const std::int32_t* bv = b.values.data().data();
  std::vector<std::int64_t> acc(p.m * p.n, 0);
  for (std::size_t m = 0; m < p.m; ++m) {
    std::int64_t* out = acc.data() + m * p.n;
    for (std::size_t k = 0; k < p.k; ++k) {
      // (a * b) << s == (a << s) * b; the shift is applied once per (m, k).
      const std::int64_t shifted = std::int64_t{av[m * p.k + k]}
                                   << p.shifts[k];
      if (shifted == 0) continue;
      const std::int32_t* brow = bv + k * p.n;
      for (std::size_t n = 0; n < p.n; ++n) out[n] += shifted * brow[n];
    }
  }
  return make_result(p, std::move(acc), 0);
}

ShiftMMResult shiftmm(const QuantizedTensor& a, const QuantizedTensor& b,
                      const GroupPlan& plan) {
  check_plan(a, plan);
  return shiftmm(a, b);
}

ShiftMMResult grouped_gemm(const QuantizedTensor& a,
                           const QuantizedTensor& b) {
  const Prepared p = prepare(a, b);
  const std::int32_t* av = a.values.data().data();
  const std::int32_t* bv = b.values.data().data();
  std::vector<std::int64_t> acc(p.m * p.n, 0);

  std::map<int, std::vector<std::size_t>> classes;
  for (std::size_t k = 0; k < p.k; ++k) classes[p.shifts[k]].push_back(k);

  if (classes.size() <= 1) {
    const int shift = classes.empty() ? 0 : classes.begin()->first;
    int_gemm_shifted(av, bv, p.m, p.k, p.n, shift, acc.data());
    return make_result(p, std::move(acc), 0);
  }

  std::size_t bytes = 0;
  std::vector<std::int32_t> a_sub, b_sub;
  for (const auto& [shift, ks] : classes) {
    const std::size_t kg = ks.size();
    a_sub.resize(p.m * kg);
    b_sub.resize(kg * p.n);
    for (std::size_t m = 0; m < p.m; ++m) {
      for (std::size_t j = 0; j < kg; ++j) {
        a_sub[m * kg + j] = av[m * p.k + ks[j]];
      }
    }
    for (std::size_t j = 0; j < kg; ++j) {
      std::copy_n(bv + ks[j] * p.n, p.n, b_sub.begin() + j * p.n);
    }
    bytes += (a_sub.size() + b_sub.size()) * sizeof(std::int32_t);
    int_gemm_shifted(a_sub.data(), b_sub.data(), p.m, kg, p.n, shift,
                     acc.data());
  }
  return make_result(p, std::move(acc), bytes);
}

ShiftMMResult grouped_gemm(const QuantizedTensor& a, const QuantizedTensor& b,
                           const GroupPlan& plan) {
  check_plan(a, plan);
  return grouped_gemm(a, b);
}

ShiftMMResult linear_forward(const QuantizedTensor& x_q,
                             const QuantizedTensor& w_q) {
  return shiftmm(x_q, transpose(w_q));
}

ShiftMMResult loss_backward(const QuantizedTensor& g_q,
                            const QuantizedTensor& w_q) {
  return shiftmm(g_q, w_q);
}

ShiftMMResult weight_grad(const QuantizedTensor& g_q,
                          const QuantizedTensor& x_q) {
  return shiftmm(transpose(g_q), x_q);
}

}  // namespace shiftquant
