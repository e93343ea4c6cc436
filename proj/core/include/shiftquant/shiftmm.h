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

// Integer matrix multiplication of quantized operands.
//
// For A [M x K] and B [K x N] the kernels compute
//
//   acc[m, n] = sum_k (a[m, k] * b[k, n]) << shift_k
//
// in 64-bit integers. shift_k is (N_G - 1 - g_k) for an operand grouped
// along K with ShiftQuant, summed over both operands when both are grouped.
// Left shifts keep the accumulation exact; the common factor 2^-(max shift)
// moves into the real-valued output scale.
//
// Scales on the non-inner axes (per-row of A, per-column of B) become
// output row and column factors. A per-channel scale on K cannot be
// factored out of the sum and is rejected with GranularityError.

#ifndef SHIFTQUANT_SHIFTMM_H_
#define SHIFTQUANT_SHIFTMM_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "shiftquant/grouping.h"
#include "shiftquant/quantizer.h"
#include "shiftquant/tensor.h"

namespace shiftquant {

struct ShiftMMResult {
  AccTensor accumulators;
  // s_A^-1 * s_B^-1 * 2^-(max shift) for the scalar parts of both scales.
  double combined_scale = 1.0;
  // Per-output-row and per-output-column factors (all 1 when the operands
  // have scalar scales).
  std::vector<double> row_scales;
  std::vector<double> col_scales;
  // Bytes copied to build per-group submatrices. Always 0 for shiftmm.
  std::size_t rearrangement_bytes = 0;

  // accumulators * combined_scale * row_scales[m] * col_scales[n].
  DenseTensor dequantize() const;
};

// Shift-during-accumulation kernel: one pass over K, no group extraction.
// Throws DimensionError on extent mismatch, GranularityError for affine
// operands or per-channel scales on K, and CapacityError when
//   bits_a + bits_b + ceil(log2 K) + max shift > 63.
ShiftMMResult shiftmm(const QuantizedTensor& a, const QuantizedTensor& b);

// As above, additionally checking that `a` is grouped along K by `plan`.
ShiftMMResult shiftmm(const QuantizedTensor& a, const QuantizedTensor& b,
                      const GroupPlan& plan);

// Reference backend: gathers the K indices of each shift class into dense
// submatrices, runs one integer GEMM per class and combines the partial
// products with shifts. Accumulators are bit-identical to shiftmm().
ShiftMMResult grouped_gemm(const QuantizedTensor& a, const QuantizedTensor& b);
ShiftMMResult grouped_gemm(const QuantizedTensor& a, const QuantizedTensor& b,
                           const GroupPlan& plan);

// Largest shift applied to any k, and the per-k shifts.
std::vector<int> inner_shifts(const QuantizedTensor& a,
                              const QuantizedTensor& b);

// Throws CapacityError unless the guard above holds.
void check_accumulator_capacity(int bits_a, int bits_b, std::size_t k,
                                int max_shift);

// The three training matmuls for a linear layer y = x W^T with W stored as
// [out x in]:
//   linear_forward: x [B x in] * W^T  (inner axis: in)
//   loss_backward:  g [B x out] * W   (inner axis: out)
//   weight_grad:    g^T * x           (inner axis: B)
// Weight scales must sit on the non-inner axis of the respective product
// (per-out-channel for the forward pass, per-in-channel for the backward
// pass); otherwise GranularityError.
ShiftMMResult linear_forward(const QuantizedTensor& x_q,
                             const QuantizedTensor& w_q);
ShiftMMResult loss_backward(const QuantizedTensor& g_q,
                            const QuantizedTensor& w_q);
ShiftMMResult weight_grad(const QuantizedTensor& g_q,
                          const QuantizedTensor& x_q);

}  // namespace shiftquant

#endif  // SHIFTQUANT_SHIFTMM_H_
