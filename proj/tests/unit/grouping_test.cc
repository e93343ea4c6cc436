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

#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "shiftquant/errors.h"
#include "shiftquant/random.h"

namespace shiftquant {
namespace {

std::vector<std::uint8_t> groups(std::initializer_list<int> g) {
  return std::vector<std::uint8_t>(g.begin(), g.end());
}

// Brute force over every way to cut the sorted ranges into at most
// `max_runs` consecutive runs. Each run costs its first (largest) range times
// the sum of the reciprocals, summed in order; runs are summed left to right.
double exhaustive_min(const std::vector<double>& sorted_desc,
                      std::size_t max_runs) {
  const std::size_t n = sorted_desc.size();
  double best = std::numeric_limits<double>::infinity();
  // Bit i set means a cut between positions i and i + 1.
  for (std::uint32_t cuts = 0; cuts < (1u << (n - 1)); ++cuts) {
    if (static_cast<std::size_t>(std::popcount(cuts)) + 1 > max_runs) continue;
    double total = 0.0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool end_here = i + 1 == n || ((cuts >> i) & 1u);
      if (!end_here) continue;
      double recip = 0.0;
      for (std::size_t j = start; j <= i; ++j) recip += 1.0 / sorted_desc[j];
      total += sorted_desc[start] * recip;
      start = i + 1;
    }
    best = std::min(best, total);
  }
  return best;
}

TEST(ChannelRangesTest, Examples) {
  EXPECT_EQ(channel_ranges(DenseTensor(Shape{2, 1}, {-3, 1}), 1),
            std::vector<double>{3.0});
  EXPECT_EQ(channel_ranges(DenseTensor::zeros(Shape{3, 1}), 1),
            std::vector<double>{0.0});
  // Columns are the channels.
  const DenseTensor t(Shape{2, 2}, {1, 0.25, -1, 0.1});
  EXPECT_EQ(channel_ranges(t, 1), (std::vector<double>{1.0, 0.25}));
  EXPECT_THROW(channel_ranges(t, 2), DimensionError);
}

TEST(ChannelRangesTest, AffineUsesSpread) {
  const DenseTensor t(Shape{2, 1}, {-3, 1});
  EXPECT_EQ(channel_ranges(t, 1, false), std::vector<double>{4.0});
}

TEST(PotGroupPlanTest, HandEvaluatedGroups) {
  const std::vector<double> r{1.0, 0.6, 0.3, 0.1};
  const GroupPlan plan = pot_group_plan(r, 4);
  EXPECT_EQ(plan.group_of_channel, groups({0, 0, 1, 3}));
  EXPECT_EQ(plan.r_max, 1.0);
  EXPECT_EQ(plan.shift_of(0), 3);
  EXPECT_EQ(plan.shift_of(3), 0);
}

TEST(PotGroupPlanTest, EqualRangesCollapse) {
  const std::vector<double> r{5, 5, 5};
  for (std::size_t n = 1; n <= 6; ++n) {
    EXPECT_EQ(pot_group_plan(r, n).group_of_channel, groups({0, 0, 0}));
  }
}

TEST(PotGroupPlanTest, SingleGroup) {
  const std::vector<double> r{1.0, 0.3};
  EXPECT_EQ(pot_group_plan(r, 1).group_of_channel, groups({0, 0}));
}

TEST(PotGroupPlanTest, ExactThresholdsAndZeros) {
  // 0.5 sits on tau_1 and belongs to group 1; just below goes to group 1 too,
  // 0.25 exactly is group 2.
  const std::vector<double> r{1.0, 0.5, std::nextafter(0.5, 0.0), 0.25, 0.0};
  EXPECT_EQ(pot_group_plan(r, 4).group_of_channel, groups({0, 1, 1, 2, 3}));
  const std::vector<double> zeros{0.0, 0.0};
  EXPECT_THROW(pot_group_plan(zeros, 4), DegenerateInputError);
}

TEST(PotGroupPlanTest, MatchesLogFormulaOnRandomRanges) {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    const std::size_t ng = 1 + rng.below(8);
    std::vector<double> r(n);
    for (double& v : r) v = std::pow(10.0, rng.uniform(-4, 2));
    const GroupPlan plan = pot_group_plan(r, ng);
    const double r_max = *std::max_element(r.begin(), r.end());
    for (std::size_t i = 0; i < n; ++i) {
      // Membership condition: tau_{g+1} < r_i <= tau_g, last group open.
      const int g = plan.group_of_channel[i];
      EXPECT_LE(r[i], std::ldexp(r_max, -g));
      if (static_cast<std::size_t>(g) + 1 < ng) {
        EXPECT_GT(r[i], std::ldexp(r_max, -g - 1));
      }
    }
  }
}

TEST(GroupingObjectiveTest, HandEvaluated) {
  const std::vector<double> r{1.0, 0.6, 0.3, 0.1};
  EXPECT_NEAR(grouping_objective(pot_group_plan(r, 4), r),
              1.0 + 1.0 / 0.6 + 0.5 / 0.3 + 0.125 / 0.1, 1e-12);
  EXPECT_NEAR(grouping_objective(pot_group_plan(r, 4), r), 5.5833333, 1e-6);
  EXPECT_NEAR(grouping_objective(pot_group_plan(r, 1), r), 16.0, 1e-12);
  const std::vector<double> one{0.37};
  for (std::size_t n = 1; n <= 5; ++n) {
    EXPECT_EQ(grouping_objective(pot_group_plan(one, n), one), 1.0);
  }
}

TEST(GroupingObjectiveTest, MonotoneInGroupCount) {
  Rng rng(22);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(32);
    std::vector<double> r(n);
    for (double& v : r) v = std::pow(10.0, rng.uniform(-3, 0));
    for (std::size_t ng = 1; ng < 8; ++ng) {
      EXPECT_LE(grouping_objective(pot_group_plan(r, ng + 1), r),
                grouping_objective(pot_group_plan(r, ng), r));
    }
  }
}

TEST(OptimalGroupingTest, TwoPairs) {
  const std::vector<double> r{1, 1, 0.1, 0.1};
  const OptimalGrouping g = optimal_group_plan_dp(r, 2);
  EXPECT_EQ(g.objective, 4.0);
  EXPECT_EQ(g.group_sizes, (std::vector<std::size_t>{2, 2}));
  EXPECT_EQ(g.group_of_channel, groups({0, 0, 1, 1}));
  EXPECT_EQ(g.thresholds, (std::vector<double>{1.0, 0.1}));
}

TEST(OptimalGroupingTest, OneGroupPerChannel) {
  const std::vector<double> r{0.9, 0.02, 0.4, 0.13, 0.7};
  EXPECT_NEAR(optimal_group_plan_dp(r, r.size()).objective, 5.0, 1e-15);
}

TEST(OptimalGroupingTest, SingleGroupIsPerTensor) {
  const std::vector<double> r{0.9, 0.02, 0.4};
  EXPECT_NEAR(optimal_group_plan_dp(r, 1).objective,
              1.0 + 0.9 / 0.02 + 0.9 / 0.4, 1e-12);
}

TEST(OptimalGroupingTest, ChannelLimit) {
  const std::vector<double> r(10, 1.0);
  EXPECT_THROW(optimal_group_plan_dp(r, 2, 9), ResourceLimitError);
}

TEST(OptimalGroupingTest, EqualsExhaustiveSearchExactly) {
  Rng rng(23);
  for (int trial = 0; trial < 600; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    const std::size_t ng = 1 + rng.below(3);
    std::vector<double> r(n);
    for (double& v : r) v = std::pow(10.0, rng.uniform(-3, 0));
    const OptimalGrouping g = optimal_group_plan_dp(r, ng);
    EXPECT_EQ(g.objective, exhaustive_min(sorted_positive_ranges(r), ng))
        << "trial " << trial;
  }
}

TEST(OptimalGroupingTest, ReportedPartitionHasReportedObjective) {
  Rng rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(2 + rng.below(30));
    for (double& v : r) v = std::pow(10.0, rng.uniform(-3, 0));
    const OptimalGrouping g = optimal_group_plan_dp(r, 1 + rng.below(6));
    EXPECT_EQ(partition_objective(sorted_positive_ranges(r), g.group_sizes),
              g.objective);
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_LE(r[i], g.thresholds[g.group_of_channel[i]]);
    }
  }
}

TEST(OptimalGroupingTest, PowerOfTwoPlanIsNeverBetter) {
  Rng rng(25);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> r(1 + rng.below(24));
    for (double& v : r) v = std::pow(10.0, rng.uniform(-3, 0));
    const std::size_t ng = 1 + rng.below(6);
    EXPECT_GE(grouping_objective(pot_group_plan(r, ng), r) * (1 + 1e-12),
              optimal_group_plan_dp(r, ng).objective);
  }
}

TEST(GroupPlanTest, ValidateRejectsOutOfRangeGroup) {
  GroupPlan plan;
  plan.n_groups = 2;
  plan.r_max = 1.0;
  plan.group_of_channel = groups({0, 2});
  EXPECT_THROW(plan.validate(), DimensionError);
  const GroupPlan zero = GroupPlan::all_zero_plan(3, 4);
  EXPECT_TRUE(zero.all_zero());
  EXPECT_EQ(zero.group_of_channel, groups({3, 3, 3}));
}

}  // namespace
}  // namespace shiftquant
