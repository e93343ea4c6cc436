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

#include "shiftquant/quantizer.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace shiftquant {
namespace {

// Scales and zero points of every quantization unit plus the map from flat
// element index to unit.
struct UnitLayout {
  GranularityKind kind = GranularityKind::kPerTensor;
  std::optional<std::size_t> axis;
  std::vector<double> unit_scales;       // what QuantizedTensor stores
  std::vector<double> unit_zero_points;  // same length
  std::optional<GroupPlan> plan;
  // Effective scale / zero point per channel (size 1 for per-tensor).
  std::vector<double> channel_scales;
  std::vector<double> channel_zero_points;
  std::size_t inner = 1;
  std::size_t extent = 1;

  std::size_t channel_of(std::size_t flat) const {
    return (flat / inner) % extent;
  }
};

void set_axis(UnitLayout& layout, const Shape& shape, std::size_t axis) {
  if (axis >= shape.rank()) {
    throw DimensionError("quantization axis " + std::to_string(axis) +
                         " out of range for shape " + shape.to_string());
  }
  layout.axis = axis;
  layout.extent = shape[axis];
  layout.inner = 1;
  for (std::size_t a = axis + 1; a < shape.rank(); ++a) {
    layout.inner *= shape[a];
  }
}

double scale_for_range(double range, std::int32_t qmax,
                       const QuantConfig& cfg) {
  if (range > 0.0) return static_cast<double>(qmax) / range;
  if (!cfg.zero_bypass) {
    throw DegenerateInputError(
        "zero quantization range with zero bypass disabled");
  }
  return 0.0;
}

UnitLayout plan_units(const DenseTensor& t, const QuantConfig& cfg,
                      const Granularity& granularity) {
  const std::int32_t qmax = cfg.qmax();
  UnitLayout layout;

  if (const auto* per_tensor = std::get_if<PerTensor>(&granularity)) {
    layout.kind = GranularityKind::kPerTensor;
    double scale = 0.0;
    double zero_point = 0.0;
    if (cfg.symmetric) {
      double range = 0.0;
      if (per_tensor->range) {
        range = *per_tensor->range;
        if (!std::isfinite(range) || range < 0.0) {
          throw ConfigError("explicit quantization range must be >= 0");
        }
      } else {
        for (double v : t.data()) range = std::max(range, std::abs(v));
      }
      scale = scale_for_range(range, qmax, cfg);
    } else {
      if (per_tensor->range) {
        throw ModeError("explicit ranges are only supported symmetrically");
      }
      const auto [lo, hi] = std::minmax_element(t.data().begin(),
                                                t.data().end());
      zero_point = 0.5 * (*hi + *lo);
      scale = scale_for_range(0.5 * (*hi - *lo), qmax, cfg);
    }
    layout.unit_scales = {scale};
    layout.unit_zero_points = {zero_point};
    layout.channel_scales = layout.unit_scales;
    layout.channel_zero_points = layout.unit_zero_points;
    return layout;
  }

  if (!cfg.symmetric) {
    throw GranularityError(
        "affine quantization is only supported per-tensor");
  }

  if (const auto* per_channel = std::get_if<PerChannel>(&granularity)) {
    layout.kind = GranularityKind::kPerChannel;
    set_axis(layout, t.shape(), per_channel->axis);
    for (double r : channel_ranges(t, per_channel->axis, true)) {
      layout.unit_scales.push_back(scale_for_range(r, qmax, cfg));
    }
    layout.unit_zero_points.assign(layout.unit_scales.size(), 0.0);
    layout.channel_scales = layout.unit_scales;
    layout.channel_zero_points = layout.unit_zero_points;
    return layout;
  }

  const auto& grouped = std::get<ShiftGrouped>(granularity);
  layout.kind = GranularityKind::kShiftQuant;
  set_axis(layout, t.shape(), grouped.axis);
  grouped.plan.validate();
  if (grouped.plan.channels() != layout.extent) {
    throw DimensionError("group plan covers " +
                         std::to_string(grouped.plan.channels()) +
                         " channels but axis has " +
                         std::to_string(layout.extent));
  }
  const double base = scale_for_range(grouped.plan.r_max, qmax, cfg);
  layout.unit_scales = {base};
  layout.unit_zero_points = {0.0};
  layout.plan = grouped.plan;
  layout.channel_scales.resize(layout.extent);
  for (std::size_t c = 0; c < layout.extent; ++c) {
    layout.channel_scales[c] =
        std::ldexp(base, grouped.plan.group_of_channel[c]);
  }
  layout.channel_zero_points.assign(layout.extent, 0.0);
  return layout;
}

}  // namespace

void QuantConfig::validate() const {
  if (bitwidth < 2 || bitwidth > 8) {
    throw ConfigError("bitwidth must be in [2, 8], got " +
                      std::to_string(bitwidth));
  }
}

std::string to_string(GranularityKind kind) {
  switch (kind) {
    case GranularityKind::kPerTensor:
      return "per-tensor";
    case GranularityKind::kPerChannel:
      return "per-channel";
    case GranularityKind::kShiftQuant:
      return "shiftquant";
  }
  return "unknown";
}

GranularityKind granularity_kind_from_string(const std::string& name) {
  if (name == "per-tensor") return GranularityKind::kPerTensor;
  if (name == "per-channel") return GranularityKind::kPerChannel;
  if (name == "shiftquant") return GranularityKind::kShiftQuant;
  throw ConfigError("unknown granularity '" + name + "'");
}

std::size_t QuantizedTensor::channel_count() const {
  return axis ? values.dim(*axis) : 1;
}

double QuantizedTensor::channel_scale(std::size_t c) const {
  switch (kind) {
    case GranularityKind::kPerTensor:
      return scales.at(0);
    case GranularityKind::kPerChannel:
      return scales.at(c);
    case GranularityKind::kShiftQuant:
      return std::ldexp(scales.at(0), plan->group_of_channel.at(c));
  }
  return 0.0;
}

double QuantizedTensor::channel_zero_point(std::size_t c) const {
  return kind == GranularityKind::kPerChannel ? zero_points.at(c)
                                              : zero_points.at(0);
}

bool QuantizedTensor::symmetric() const {
  return std::all_of(zero_points.begin(), zero_points.end(),
                     [](double z) { return z == 0.0; });
}

std::int32_t round_to_grid(double grid_value, Rounding rounding,
                           double uniform, std::int32_t qmax) {
  const double hi = static_cast<double>(qmax);
  if (grid_value >= hi) return qmax;
  if (grid_value <= -hi) return -qmax;
  double rounded;
  if (rounding == Rounding::kNearest) {
    rounded = std::round(grid_value);
  } else {
    const double lower = std::floor(grid_value);
    rounded = uniform < grid_value - lower ? lower + 1.0 : lower;
  }
  return static_cast<std::int32_t>(rounded);
}

QuantizedTensor quantize(const DenseTensor& t, const QuantConfig& cfg,
                         const Granularity& granularity) {
  cfg.validate();
  const UnitLayout layout = plan_units(t, cfg, granularity);
  const std::int32_t qmax = cfg.qmax();

  std::vector<std::int32_t> values(t.numel());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t c = layout.channel_of(i);
    const double scale = layout.channel_scales[c];
    if (scale == 0.0) {
      values[i] = 0;
      continue;
    }
    const double grid = scale * (t[i] - layout.channel_zero_points[c]);
    const double u = cfg.rounding == Rounding::kStochastic
                         ? counter_uniform(cfg.seed, cfg.stream, i)
                         : 0.0;
    values[i] = round_to_grid(grid, cfg.rounding, u, qmax);
  }

  QuantizedTensor q;
  q.values = IntTensor(t.shape(), std::move(values));
  q.bitwidth = cfg.bitwidth;
  q.kind = layout.kind;
  q.axis = layout.axis;
  q.scales = layout.unit_scales;
  q.zero_points = layout.unit_zero_points;
  q.plan = layout.plan;
  q.rounding = cfg.rounding;
  q.seed = cfg.seed;
  q.stream = cfg.stream;
  return q;
}

QuantizedTensor quantize_shiftquant(const DenseTensor& t,
                                    const QuantConfig& cfg, std::size_t axis,
                                    std::size_t n_groups) {
  const std::vector<double> ranges = channel_ranges(t, axis, true);
  const bool all_zero =
      std::all_of(ranges.begin(), ranges.end(), [](double r) {
        return r == 0.0;
      });
  GroupPlan plan = all_zero ? GroupPlan::all_zero_plan(ranges.size(), n_groups)
                            : pot_group_plan(ranges, n_groups);
  return quantize(t, cfg, ShiftGrouped{axis, std::move(plan)});
}

DenseTensor dequantize(const QuantizedTensor& q) {
  std::size_t inner = 1, extent = 1;
  if (q.axis) {
    extent = q.values.dim(*q.axis);
    for (std::size_t a = *q.axis + 1; a < q.values.rank(); ++a) {
      inner *= q.values.dim(a);
    }
  }
  std::vector<double> scales(extent), zero_points(extent);
  for (std::size_t c = 0; c < extent; ++c) {
    scales[c] = q.channel_scale(c);
    zero_points[c] = q.channel_zero_point(c);
  }
  std::vector<double> out(q.values.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = (i / inner) % extent;
    out[i] = scales[c] == 0.0
                 ? zero_points[c]
                 : static_cast<double>(q.values[i]) / scales[c] +
                       zero_points[c];
  }
  return DenseTensor(q.values.shape(), std::move(out));
}

QuantizedTensor transpose(const QuantizedTensor& q) {
  QuantizedTensor out = q;
  out.values = transpose(q.values);
  if (q.axis) out.axis = 1 - *q.axis;
  return out;
}

VarianceEstimate closed_form_quant_variance(const DenseTensor& t,
                                            const QuantConfig& cfg,
                                            const Granularity& granularity) {
  cfg.validate();
  const UnitLayout layout = plan_units(t, cfg, granularity);
  const double qmax = static_cast<double>(cfg.qmax());
  std::vector<double> var(t.numel(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < var.size(); ++i) {
    const std::size_t c = layout.channel_of(i);
    const double scale = layout.channel_scales[c];
    if (scale == 0.0) continue;
    const double grid = scale * (t[i] - layout.channel_zero_points[c]);
    if (std::abs(grid) >= qmax) continue;
    const double frac = grid - std::floor(grid);
    var[i] = frac * (1.0 - frac) / (scale * scale);
    total += var[i];
  }
  return {DenseTensor(t.shape(), std::move(var)), total};
}

VarianceEstimate empirical_quant_variance(const DenseTensor& t,
                                          const QuantConfig& cfg,
                                          const Granularity& granularity,
                                          std::size_t trials) {
  if (cfg.rounding != Rounding::kStochastic) {
    throw ModeError(
        "quantization variance is only defined for stochastic rounding");
  }
  if (trials < 100) {
    throw ConfigError("empirical variance needs at least 100 trials");
  }
  // Welford accumulation per element.
  std::vector<double> mean(t.numel(), 0.0), m2(t.numel(), 0.0);
  QuantConfig draw = cfg;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    draw.stream = cfg.stream + trial;
    const DenseTensor sample = dequantize(quantize(t, draw, granularity));
    const double n = static_cast<double>(trial + 1);
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double delta = sample[i] - mean[i];
      mean[i] += delta / n;
      m2[i] += delta * (sample[i] - mean[i]);
    }
  }
  double total = 0.0;
  for (double& v : m2) {
    v /= static_cast<double>(trials - 1);
    total += v;
  }
  return {DenseTensor(t.shape(), std::move(m2)), total};
}

}  // namespace shiftquant
