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

// Channel grouping for power-of-two group quantization.
//
// Channels are split into groups by the magnitude of their range. Group g
// owns the threshold tau_g = r_max * 2^-g (group 0 holds the widest
// channels), and channel i belongs to the group whose threshold interval
// (tau_{g+1}, tau_g] contains r_i. The quality of a grouping is measured by
//
//   sum_g sum_{i in group g} tau_g / r_i
//
// which is minimal (= channel count) when every channel sits exactly on
// its group's threshold.

#ifndef SHIFTQUANT_GROUPING_H_
#define SHIFTQUANT_GROUPING_H_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "shiftquant/tensor.h"

namespace shiftquant {

// Largest supported group count. Shifts of up to 62 bits still leave room
// for a sign bit in the 64-bit accumulator.
inline constexpr std::size_t kMaxGroups = 63;

struct GroupPlan {
  std::size_t n_groups = 1;
  // Largest channel range; zero only for the all-zero bypass plan.
  double r_max = 0.0;
  // One byte per channel, values in [0, n_groups).
  std::vector<std::uint8_t> group_of_channel;

  std::size_t channels() const { return group_of_channel.size(); }
  double threshold(std::size_t group) const {
    return std::ldexp(r_max, -static_cast<int>(group));
  }
  // Shift applied to products of channel `c` during accumulation.
  int shift_of(std::size_t channel) const {
    return static_cast<int>(n_groups) - 1 -
           static_cast<int>(group_of_channel[channel]);
  }
  bool all_zero() const { return r_max == 0.0; }

  // Throws DimensionError unless the plan is internally consistent.
  void validate() const;

  // Every channel in the last group with r_max = 0. Used for tensors whose
  // ranges are all zero; such tensors dequantize to exact zeros.
  static GroupPlan all_zero_plan(std::size_t channels, std::size_t n_groups);

  friend bool operator==(const GroupPlan&, const GroupPlan&) = default;
};

// Per-channel range along `axis`: max |x| when symmetric, max - min
// otherwise.
std::vector<double> channel_ranges(const DenseTensor& t, std::size_t axis,
                                   bool symmetric = true);

// Power-of-two grouping. Channel i goes to
//   min(n_groups - 1, floor(log2(r_max / r_i)))
// evaluated with exact threshold comparisons; zero-range channels go to the
// last group. Throws DegenerateInputError when every range is zero.
GroupPlan pot_group_plan(std::span<const double> ranges, std::size_t n_groups);

// sum over positive-range channels of threshold(group) / r_i.
double grouping_objective(const GroupPlan& plan,
                          std::span<const double> ranges);

struct OptimalGrouping {
  // Threshold of each non-empty group, non-increasing.
  std::vector<double> thresholds;
  std::vector<std::uint8_t> group_of_channel;
  // Number of channels per group in descending-range order.
  std::vector<std::size_t> group_sizes;
  double objective = 0.0;
};

inline constexpr std::size_t kDefaultDpChannelLimit = 4096;

// Exact minimizer of the grouping objective over free thresholds, using at
// most `n_groups` groups. Ranges are sorted in descending order and split
// into contiguous runs; each run's threshold is its largest range.
//
// The objective of a run is evaluated as tau * (1/r_a + 1/r_b + ...) with
// the reciprocals summed in sorted order, and runs are summed left to right;
// partition_objective() uses the identical arithmetic.
OptimalGrouping optimal_group_plan_dp(
    std::span<const double> ranges, std::size_t n_groups,
    std::size_t max_channels = kDefaultDpChannelLimit);

// Positive ranges sorted descending (ties keep input order).
std::vector<double> sorted_positive_ranges(std::span<const double> ranges);

// Objective of splitting `sorted_desc` into consecutive runs of the given
// sizes, with the arithmetic described at optimal_group_plan_dp().
double partition_objective(std::span<const double> sorted_desc,
                           std::span<const std::size_t> run_sizes);

}  // namespace shiftquant

#endif  // SHIFTQUANT_GROUPING_H_
