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

#include "shiftquant/norm.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "shiftquant/errors.h"
#include "test_util.h"

namespace shiftquant {
namespace {

NormConfig config(NormMode mode) {
  NormConfig cfg;
  cfg.mode = mode;
  return cfg;
}

DenseTensor column(std::vector<double> v) {
  const std::size_t n = v.size();
  return DenseTensor(Shape{n, 1}, std::move(v));
}

TEST(NormForwardTest, L1HandExample) {
  NormState state = NormState::identity(1);
  const NormOutput out =
      norm_forward(column({2, -2, 4, -4}), state, config(NormMode::kL1), true);
  EXPECT_EQ(out.cache.mu_q[0], 0.0);
  EXPECT_EQ(out.cache.sigma[0], 3.0);
  const double d = 3.0 + 1e-5;
  const std::vector<double> want{2 / d, -2 / d, 4 / d, -4 / d};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.y[i], want[i], 1e-15);
  EXPECT_NEAR(out.y[0], 2.0 / 3.0, 1e-5);
}

TEST(NormForwardTest, L2HandExample) {
  NormState state = NormState::identity(1);
  const DenseTensor x = column({2, -2, 4, -4});
  const NormOutput out = norm_forward(x, state, config(NormMode::kL2), true);
  EXPECT_NEAR(out.cache.sigma[0], std::sqrt(10.0), 1e-15);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(out.y[i], x[i] / std::sqrt(10.0), 1e-5);
  }
}

TEST(NormForwardTest, MadScalingAndRawNorms) {
  const DenseTensor x = column({2, -2, 4, -4});
  NormState state = NormState::identity(1);
  NormConfig cfg = config(NormMode::kL1);
  cfg.mad_scaling = true;
  EXPECT_NEAR(batch_statistics(x, cfg).sigma[0],
              3.0 * std::sqrt(M_PI / 2.0), 1e-14);
  cfg.mad_scaling = false;
  cfg.raw_norms = true;
  EXPECT_EQ(batch_statistics(x, cfg).sigma[0], 12.0);
  cfg.mode = NormMode::kL2;
  EXPECT_NEAR(batch_statistics(x, cfg).sigma[0], std::sqrt(40.0), 1e-14);
}

TEST(NormForwardTest, ConstantChannelYieldsBeta) {
  NormState state = NormState::identity(1);
  state.gamma[0] = 2.0;
  state.beta[0] = 0.75;
  for (NormMode mode : {NormMode::kL1, NormMode::kL2}) {
    NormState s = state;
    const NormOutput out = norm_forward(column({3, 3, 3, 3}), s, config(mode),
                                        true);
    for (double y : out.y.values()) EXPECT_EQ(y, 0.75);
  }
}

TEST(NormForwardTest, NormalizedMomentsPerChannel) {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseTensor x = testing::scaled_columns(
        64, {1.0, 10.0, 0.1, 3.0}, rng);
    for (NormMode mode : {NormMode::kL1, NormMode::kL2}) {
      NormState state = NormState::identity(4);
      const NormOutput out = norm_forward(x, state, config(mode), true);
      for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0.0, abs_mean = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < 64; ++i) {
          const double v = out.cache.x_hat.at(i, c);
          mean += v;
          abs_mean += std::abs(v);
          sq += v * v;
        }
        mean /= 64;
        abs_mean /= 64;
        sq /= 64;
        EXPECT_LE(std::abs(mean), 1e-12);
        // eps shifts the spread by eps / sigma relative.
        const double sigma = out.cache.sigma[c];
        const double shrink = sigma / (sigma + 1e-5);
        if (mode == NormMode::kL1) {
          EXPECT_NEAR(abs_mean, shrink, 1e-10);
        } else {
          EXPECT_NEAR(sq, shrink * shrink, 1e-10);
        }
      }
    }
  }
}

TEST(NormForwardTest, RankThreeChannelsPoolSpatialAxis) {
  Rng rng(42);
  const DenseTensor x = testing::random_tensor(Shape{4, 3, 5}, rng);
  NormState state = NormState::identity(3);
  const NormOutput out = norm_forward(x, state, config(NormMode::kL2), true);
  const auto view = channel_view(x, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (double v : view[c]) mean += v;
    mean /= 20.0;
    EXPECT_NEAR(out.cache.mu_q[c], mean, 1e-14);
  }
}

TEST(NormForwardTest, InferenceUsesRunningStatistics) {
  NormState state = NormState::identity(1);
  state.running_mu[0] = 1.0;
  state.running_sigma[0] = 2.0;
  const NormState before = state;
  const NormOutput out =
      norm_forward(column({5, 3}), state, config(NormMode::kL1), false);
  EXPECT_NEAR(out.y[0], 4.0 / (2.0 + 1e-5), 1e-15);
  EXPECT_EQ(state.running_mu, before.running_mu);
  // Training moves the running statistics by the momentum.
  norm_forward(column({5, 3}), state, config(NormMode::kL1), true);
  EXPECT_NEAR(state.running_mu[0], 0.9 * 1.0 + 0.1 * 4.0, 1e-15);
  EXPECT_NEAR(state.running_sigma[0], 0.9 * 2.0 + 0.1 * 1.0, 1e-15);
}

TEST(NormConfigTest, Validation) {
  NormConfig cfg;
  cfg.eps = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.eps = 1e-5;
  cfg.stats_bitwidth = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.stats_bitwidth = 17;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.stats_bitwidth = 16;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(NormForwardTest, QuantizedStatisticsStayClose) {
  Rng rng(43);
  const DenseTensor x = testing::scaled_columns(32, {1.0, 2.0}, rng);
  NormConfig cfg = config(NormMode::kL1);
  NormState s1 = NormState::identity(2), s2 = NormState::identity(2);
  const NormOutput exact = norm_forward(x, s1, cfg, true);
  cfg.quantize_stats = true;
  cfg.seed = 5;
  const NormOutput quant = norm_forward(x, s2, cfg, true, 3);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    worst = std::max(worst, std::abs(exact.y[i] - quant.y[i]));
  }
  EXPECT_GT(worst, 0.0);
  EXPECT_LT(worst, 0.1);
  // Same stream, same result.
  NormState s3 = NormState::identity(2);
  EXPECT_EQ(norm_forward(x, s3, cfg, true, 3).y, quant.y);
}

// Central differences of L = sum(y * w) with respect to x.
double fd_max_relative_error(const DenseTensor& x, const NormConfig& cfg,
                             const NormState& state, const DenseTensor& w) {
  NormState s = state;
  const NormOutput fwd = norm_forward(x, s, cfg, true);
  const NormGrads g = norm_backward(w, fwd.cache, state, cfg);
  auto loss = [&](const DenseTensor& xp) {
    NormState st = state;
    const DenseTensor y = norm_forward(xp, st, cfg, true).y;
    double l = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) l += y[i] * w[i];
    return l;
  };
  // Keep the stencil inside the region where every sign(x - mu) is fixed;
  // one step moves x_i - mu by at most h.
  double nearest = std::numeric_limits<double>::infinity();
  for (double d : fwd.cache.centered.values()) {
    nearest = std::min(nearest, std::abs(d));
  }
  const double h = std::min(1e-5, nearest / 4);
  double worst = 0.0, scale = 0.0;
  std::vector<double> fd(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    std::vector<double> up = x.values(), dn = x.values();
    up[i] += h;
    dn[i] -= h;
    fd[i] = (loss(DenseTensor(x.shape(), up)) -
             loss(DenseTensor(x.shape(), dn))) / (2 * h);
    scale = std::max(scale, std::abs(fd[i]));
  }
  for (std::size_t i = 0; i < x.numel(); ++i) {
    worst = std::max(worst, std::abs(fd[i] - g.grad_x[i]) / scale);
  }
  return worst;
}

TEST(NormBackwardTest, MatchesFiniteDifferences) {
  Rng rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseTensor x = testing::random_tensor(Shape{4, 3, 5}, rng);
    const DenseTensor w = testing::random_tensor(Shape{4, 3, 5}, rng);
    NormState state = NormState::identity(3);
    for (std::size_t c = 0; c < 3; ++c) {
      state.gamma[c] = rng.uniform(0.5, 2.0);
      state.beta[c] = rng.uniform(-1, 1);
    }
    for (NormMode mode : {NormMode::kL1, NormMode::kL2}) {
      for (bool raw : {false, true}) {
        NormConfig cfg = config(mode);
        cfg.raw_norms = raw;
        cfg.mad_scaling = trial % 2 == 1;
        EXPECT_LE(fd_max_relative_error(x, cfg, state, w), 1e-5)
            << "trial " << trial << " mode " << static_cast<int>(mode);
      }
    }
  }
}

TEST(NormBackwardTest, UniformUpstreamGivesZeroGradient) {
  // x_hat sums to zero per channel, so sum(c * y) does not depend on x.
  Rng rng(45);
  const DenseTensor x = testing::random_tensor(Shape{4, 3, 5}, rng);
  const DenseTensor w = DenseTensor::filled(x.shape(), 0.7);
  for (NormMode mode : {NormMode::kL1, NormMode::kL2}) {
    NormState state = NormState::identity(3);
    const NormOutput fwd = norm_forward(x, state, config(mode), true);
    const NormGrads g =
        norm_backward(w, fwd.cache, NormState::identity(3), config(mode));
    for (double v : g.grad_x.values()) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(NormBackwardTest, ZeroGammaZeroGradient) {
  Rng rng(46);
  const DenseTensor x = testing::random_tensor(Shape{8, 2}, rng);
  for (NormMode mode : {NormMode::kL1, NormMode::kL2}) {
    NormState state = NormState::identity(2);
    state.gamma = {0.0, 0.0};
    const NormOutput fwd = norm_forward(x, state, config(mode), true);
    const NormGrads g = norm_backward(testing::random_tensor(x.shape(), rng),
                                      fwd.cache, state, config(mode));
    for (double v : g.grad_x.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(NormBackwardTest, ParameterGradients) {
  Rng rng(47);
  const DenseTensor x = testing::random_tensor(Shape{6, 2}, rng);
  const DenseTensor gy = testing::random_tensor(Shape{6, 2}, rng);
  NormState state = NormState::identity(2);
  const NormOutput fwd = norm_forward(x, state, config(NormMode::kL1), true);
  const NormGrads g = norm_backward(gy, fwd.cache, state,
                                    config(NormMode::kL1));
  for (std::size_t c = 0; c < 2; ++c) {
    double gg = 0.0, gb = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      gg += gy.at(i, c) * fwd.cache.x_hat.at(i, c);
      gb += gy.at(i, c);
    }
    EXPECT_NEAR(g.grad_gamma[c], gg, 1e-14);
    EXPECT_NEAR(g.grad_beta[c], gb, 1e-14);
  }
  EXPECT_THROW(norm_backward(DenseTensor::zeros(Shape{5, 2}), fwd.cache,
                             state, config(NormMode::kL1)),
               DimensionError);
}

TEST(LipschitzTest, BoundHandExamples) {
  const NormState state = NormState::identity(1);
  Rng rng(48);
  const DenseTensor g4 = testing::random_tensor(Shape{4}, rng);
  EXPECT_NEAR(lipschitz_probe(DenseTensor(Shape{4}, {1, 1, -1, -1}), g4, state)
                  .bound,
              0.25, 1e-15);
  const DenseTensor g2 = testing::random_tensor(Shape{2}, rng);
  for (double a : {0.5, 3.0, 100.0}) {
    EXPECT_NEAR(lipschitz_probe(DenseTensor(Shape{2}, {a, -a}), g2, state)
                    .bound,
                0.5, 1e-15);
  }
  EXPECT_THROW(lipschitz_probe(DenseTensor(Shape{3}, {2, 2, 2}),
                               DenseTensor(Shape{3}, {1, 2, 3}), state),
               DegenerateInputError);
}

TEST(LipschitzTest, DominantElementStaysWithinBound) {
  // Two distinct deviations: the L1 gradient is the L2 gradient rescaled, so
  // the ratio meets the bound up to rounding.
  const DenseTensor x(Shape{4}, {10, 0.1, 0.1, 0.1});
  NormState state = NormState::identity(1);
  Rng rng(49);
  for (int i = 0; i < 100; ++i) {
    state.gamma[0] = rng.uniform(0.1, 3.0);
    // A tiny eps: with eps the ratio is ((s2 + eps) / (s1 + eps))^2.
    const LipschitzProbe p = lipschitz_probe(
        x, testing::random_tensor(Shape{4}, rng), state, 1e-14);
    EXPECT_LT(p.bound, 1.0);
    EXPECT_LE(p.ratio, p.bound * (1 + 1e-9));
  }
}

TEST(LipschitzTest, BoundNeverExceedsOne) {
  Rng rng(50);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + rng.below(64);
    const LipschitzProbe p =
        lipschitz_probe(testing::random_tensor(Shape{n}, rng),
                        testing::random_tensor(Shape{n}, rng),
                        NormState::identity(1));
    EXPECT_LE(p.bound, 1.0);
    EXPECT_GE(p.sigma_l1, p.sigma_l2);
  }
}

TEST(SigmaGapTest, LargestSigmaIsOnGrid) {
  Rng rng(51);
  NormConfig cfg;
  const auto gaps = sigma_quant_gap({testing::random_tensor(Shape{64}, rng)},
                                    cfg);
  ASSERT_EQ(gaps.size(), 1u);
  EXPECT_EQ(gaps[0].gap_l1, 0.0);
}

TEST(SigmaGapTest, GapBelowOneStep) {
  Rng rng(52);
  std::vector<DenseTensor> inputs;
  for (int i = 0; i < 50; ++i) {
    inputs.push_back(testing::random_tensor(Shape{32}, rng,
                                            std::pow(10.0, rng.uniform(0, 3))));
  }
  NormConfig cfg;
  const auto gaps = sigma_quant_gap(inputs, cfg);
  double sigma_max = 0.0;
  for (const SigmaGap& g : gaps) {
    sigma_max = std::max({sigma_max, g.sigma_l1, g.sigma_l2});
  }
  const double step = sigma_max / 127.0;
  for (const SigmaGap& g : gaps) {
    for (auto [sigma, gap] : {std::pair{g.sigma_l1, g.gap_l1},
                              std::pair{g.sigma_l2, g.gap_l2}}) {
      EXPECT_LE(gap, step / std::max(sigma - step, step) + 1e-12);
    }
  }
}

TEST(SigmaGapTest, L1GapSmallerOnGaussianBatches) {
  Rng rng(53);
  std::vector<DenseTensor> inputs;
  for (int i = 0; i < 1000; ++i) {
    inputs.push_back(testing::random_tensor(Shape{256}, rng));
  }
  NormConfig cfg;
  cfg.stats_bitwidth = 8;
  const auto gaps = sigma_quant_gap(inputs, cfg);
  double l1 = 0.0, l2 = 0.0;
  for (const SigmaGap& g : gaps) {
    EXPECT_GT(g.sigma_l1, g.sigma_l2);
    l1 += g.gap_l1;
    l2 += g.gap_l2;
  }
  EXPECT_LT(l1, l2);
}

}  // namespace
}  // namespace shiftquant
