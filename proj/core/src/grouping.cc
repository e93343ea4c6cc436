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

#include "shiftquant/grouping.h"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

namespace shiftquant {
namespace {

void check_group_count(std::size_t n_groups) {
  if (n_groups < 1 || n_groups > kMaxGroups) {
    throw DimensionError("group count must be in [1, " +
                         std::to_string(kMaxGroups) + "], got " +
                         std::to_string(n_groups));
  }
}

void check_ranges(std::span<const double> ranges) {
  if (ranges.empty()) throw DimensionError("no channel ranges given");
  for (double r : ranges) {
    if (!std::isfinite(r) || r < 0.0) {
      throw DegenerateInputError("channel ranges must be finite and >= 0");
    }
  }
}

}  // namespace

void GroupPlan::validate() const {
  check_group_count(n_groups);
  if (!std::isfinite(r_max) || r_max < 0.0) {
    throw DimensionError("group plan r_max must be finite and >= 0");
  }
  for (std::uint8_t g : group_of_channel) {
    if (g >= n_groups) {
      throw DimensionError("group index " + std::to_string(g) +
                           " out of range for " + std::to_string(n_groups) +
                           " groups");
    }
  }
}

GroupPlan GroupPlan::all_zero_plan(std::size_t channels,
                                   std::size_t n_groups) {
  check_group_count(n_groups);
  GroupPlan plan;
  plan.n_groups = n_groups;
  plan.r_max = 0.0;
  plan.group_of_channel.assign(channels,
                               static_cast<std::uint8_t>(n_groups - 1));
  return plan;
}

std::vector<double> channel_ranges(const DenseTensor& t, std::size_t axis,
                                   bool symmetric) {
  const auto view = channel_view(t, axis);
  std::vector<double> ranges;
  ranges.reserve(view.size());
  for (const auto slice : view) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double mag = 0.0;
    for (double v : slice) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      mag = std::max(mag, std::abs(v));
    }
    ranges.push_back(symmetric ? mag : hi - lo);
  }
  return ranges;
}

GroupPlan pot_group_plan(std::span<const double> ranges,
                         std::size_t n_groups) {
  check_group_count(n_groups);
  check_ranges(ranges);
  const double r_max = *std::max_element(ranges.begin(), ranges.end());
  if (r_max == 0.0) {
    throw DegenerateInputError("all channel ranges are zero");
  }
  GroupPlan plan;
  plan.n_groups = n_groups;
  plan.r_max = r_max;
  plan.group_of_channel.resize(ranges.size());
  const int last = static_cast<int>(n_groups) - 1;
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const double r = ranges[i];
    int g = last;
    if (r > 0.0) {
      // ilogb gives a first guess; the loops settle it with exact
      // comparisons against r_max * 2^-g (ldexp is exact).
      g = std::clamp(std::ilogb(r_max / r), 0, last);
      while (g > 0 && r > std::ldexp(r_max, -g)) --g;
      while (g < last && r <= std::ldexp(r_max, -(g + 1))) ++g;
    }
    plan.group_of_channel[i] = static_cast<std::uint8_t>(g);
  }
  return plan;
}

double grouping_objective(const GroupPlan& plan,
                          std::span<const double> ranges) {
  if (plan.channels() != ranges.size()) {
    throw DimensionError("plan covers " + std::to_string(plan.channels()) +
                         " channels, got " + std::to_string(ranges.size()) +
                         " ranges");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (ranges[i] > 0.0) {
      total += plan.threshold(plan.group_of_channel[i]) / ranges[i];
    }
  }
  return total;
}

std::vector<double> sorted_positive_ranges(std::span<const double> ranges) {
  std::vector<double> sorted;
  for (double r : ranges) {
    if (r > 0.0) sorted.push_back(r);
  }
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
  return sorted;
}

double partition_objective(std::span<const double> sorted_desc,
                           std::span<const std::size_t> run_sizes) {
  double total = 0.0;
  std::size_t start = 0;
  for (std::size_t size : run_sizes) {
    if (size == 0 || start + size > sorted_desc.size()) {
      throw DimensionError("partition run sizes do not tile the ranges");
    }
    double reciprocal_sum = 0.0;
    for (std::size_t k = start; k < start + size; ++k) {
      reciprocal_sum += 1.0 / sorted_desc[k];
    }
    total += sorted_desc[start] * reciprocal_sum;
    start += size;
  }
  if (start != sorted_desc.size()) {
    throw DimensionError("partition run sizes do not tile the ranges");
  }
  return total;
}

OptimalGrouping optimal_group_plan_dp(std::span<const double> ranges,
                                      std::size_t n_groups,
                                      std::size_t max_channels) {
  check_group_count(n_groups);
  check_ranges(ranges);
  if (ranges.size() > max_channels) {
    throw ResourceLimitError("optimal grouping limited to " +
                             std::to_string(max_channels) + " channels, got " +
                             std::to_string(ranges.size()));
  }

  // Channel order by descending range, zero ranges last.
  std::vector<std::size_t> order(ranges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                   std::size_t b) {
    return ranges[a] > ranges[b];
  });
  const std::vector<double> sorted = sorted_positive_ranges(ranges);
  const std::size_t n = sorted.size();
  if (n == 0) throw DegenerateInputError("all channel ranges are zero");
  const std::size_t max_runs = std::min(n_groups, n);

  // best[g][j]: minimal objective of the first j sorted channels in exactly
  // g runs. cut[g][j]: start of the last run in that optimum.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(max_runs + 1,
                                        std::vector<double>(n + 1, kInf));
  std::vector<std::vector<std::size_t>> cut(
      max_runs + 1, std::vector<std::size_t>(n + 1, 0));
  best[0][0] = 0.0;
  for (std::size_t g = 1; g <= max_runs; ++g) {
    for (std::size_t start = g - 1; start < n; ++start) {
      const double prefix = best[g - 1][start];
      if (prefix == kInf) continue;
      const double tau = sorted[start];
      double reciprocal_sum = 0.0;
      for (std::size_t end = start + 1; end <= n; ++end) {
        reciprocal_sum += 1.0 / sorted[end - 1];
        const double candidate = prefix + tau * reciprocal_sum;
        if (candidate < best[g][end]) {
          best[g][end] = candidate;
          cut[g][end] = start;
        }
      }
    }
  }

  std::size_t runs = 1;
  for (std::size_t g = 2; g <= max_runs; ++g) {
    if (best[g][n] < best[runs][n]) runs = g;
  }

  OptimalGrouping result;
  result.objective = best[runs][n];
  result.group_sizes.assign(runs, 0);
  for (std::size_t g = runs, end = n; g > 0; --g) {
    const std::size_t start = cut[g][end];
    result.group_sizes[g - 1] = end - start;
    end = start;
  }
  result.thresholds.reserve(runs);
  result.group_of_channel.assign(ranges.size(),
                                 static_cast<std::uint8_t>(runs - 1));
  std::size_t pos = 0;
  for (std::size_t g = 0; g < runs; ++g) {
    result.thresholds.push_back(sorted[pos]);
    for (std::size_t k = 0; k < result.group_sizes[g]; ++k, ++pos) {
      result.group_of_channel[order[pos]] = static_cast<std::uint8_t>(g);
    }
  }
  return result;
}

}  // namespace shiftquant
