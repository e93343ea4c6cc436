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

// Uniform integer quantization with stochastic or nearest rounding.
//
// A quantization unit (the whole tensor, one channel, or one ShiftQuant
// group) has a scale s and zero point z. A real value x maps to the grid
// value v = s * (x - z), which is rounded to an integer q and clamped to
// [-qmax, qmax] with qmax = 2^(bits-1) - 1. Dequantization is q / s + z.
//
// Symmetric units use z = 0 and s = qmax / r with r = max |x|, so the range
// limit lands exactly on the top level. Affine units (per-tensor only) use
// z = (max + min) / 2 and s = qmax / ((max - min) / 2).
//
// ShiftQuant units share a base scale s_l = qmax / r_max; channel c in group
// g uses s_l * 2^g.

#ifndef SHIFTQUANT_QUANTIZER_H_
#define SHIFTQUANT_QUANTIZER_H_

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "shiftquant/grouping.h"
#include "shiftquant/random.h"
#include "shiftquant/tensor.h"

namespace shiftquant {

enum class Rounding { kStochastic, kNearest };

struct QuantConfig {
  int bitwidth = 4;
  Rounding rounding = Rounding::kStochastic;
  bool symmetric = true;
  std::uint64_t seed = 0;
  // Invocation id; together with the seed and the flat element index it
  // keys every stochastic rounding draw.
  std::uint64_t stream = 0;
  // Zero-range units dequantize to exact zeros instead of raising.
  bool zero_bypass = true;

  // Throws ConfigError for bitwidth outside [2, 8].
  void validate() const;
  std::int32_t qmax() const { return (std::int32_t{1} << (bitwidth - 1)) - 1; }
};

// Per-tensor scale; `range` overrides the calibrated max |x| (symmetric
// only). Values beyond an explicit range clamp.
struct PerTensor {
  std::optional<double> range;
};
struct PerChannel {
  std::size_t axis = 0;
};
struct ShiftGrouped {
  std::size_t axis = 0;
  GroupPlan plan;
};
using Granularity = std::variant<PerTensor, PerChannel, ShiftGrouped>;

enum class GranularityKind { kPerTensor, kPerChannel, kShiftQuant };

std::string to_string(GranularityKind kind);
GranularityKind granularity_kind_from_string(const std::string& name);

struct QuantizedTensor {
  IntTensor values;
  int bitwidth = 4;
  GranularityKind kind = GranularityKind::kPerTensor;
  // Channel axis; unset for per-tensor.
  std::optional<std::size_t> axis;
  // Per-tensor: {s}. Per-channel: one per channel. ShiftQuant: {s_l}.
  // A zero entry is the zero bypass: that unit dequantizes to its zero point.
  std::vector<double> scales;
  // Same length as `scales`; all zero in symmetric mode.
  std::vector<double> zero_points;
  std::optional<GroupPlan> plan;
  Rounding rounding = Rounding::kStochastic;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::int32_t qmax() const {
    return (std::int32_t{1} << (bitwidth - 1)) - 1;
  }
  std::size_t channel_count() const;
  // Scale of channel `c` (or of the tensor when per-tensor).
  double channel_scale(std::size_t c) const;
  double channel_zero_point(std::size_t c) const;
  bool symmetric() const;
};

// Counter-keyed rounding of a grid value. `uniform` is the draw in [0, 1)
// (ignored for nearest). Nearest rounds half away from zero.
std::int32_t round_to_grid(double grid_value, Rounding rounding,
                           double uniform, std::int32_t qmax);

QuantizedTensor quantize(const DenseTensor& t, const QuantConfig& cfg,
                         const Granularity& granularity);

// ShiftQuant with the power-of-two plan built from `t`'s own channel
// ranges. An all-zero tensor gets the all-zero plan.
QuantizedTensor quantize_shiftquant(const DenseTensor& t,
                                    const QuantConfig& cfg, std::size_t axis,
                                    std::size_t n_groups);

DenseTensor dequantize(const QuantizedTensor& q);

// Materializing transpose of a rank-2 quantized tensor; the channel axis
// follows its data (0 <-> 1).
QuantizedTensor transpose(const QuantizedTensor& q);

struct VarianceEstimate {
  DenseTensor per_element;
  double total = 0.0;
};

// Exact stochastic-rounding variance (x - l(x)) (u(x) - x) of every element
// in real units, from the scales `quantize` would choose. Clamped elements
// have zero variance.
VarianceEstimate closed_form_quant_variance(const DenseTensor& t,
                                            const QuantConfig& cfg,
                                            const Granularity& granularity);

// Sample variance over `trials` independent quantize/dequantize draws
// (streams cfg.stream, cfg.stream + 1, ...). Stochastic mode only.
VarianceEstimate empirical_quant_variance(const DenseTensor& t,
                                          const QuantConfig& cfg,
                                          const Granularity& granularity,
                                          std::size_t trials);

}  // namespace shiftquant

#endif  // SHIFTQUANT_QUANTIZER_H_
