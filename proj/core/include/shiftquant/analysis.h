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

// Numerical studies of stochastic-rounding variance: expected variance under
// Laplace mixtures, the ShiftQuant variance bound against per-channel and
// per-tensor quantization, agreement between the grouping objective and the
// measured variance, and the expected maximum of Laplace samples.

#ifndef SHIFTQUANT_ANALYSIS_H_
#define SHIFTQUANT_ANALYSIS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "shiftquant/norm.h"
#include "shiftquant/random.h"
#include "shiftquant/tensor.h"

namespace shiftquant {

struct LaplaceComponent {
  double weight = 1.0;
  double location = 0.0;
  double scale = 1.0;
};

struct LaplaceMixture {
  std::vector<LaplaceComponent> components;

  static LaplaceMixture single(double location, double scale);
  // Throws ConfigError unless weights are positive and sum to 1 (1e-12)
  // and every scale is positive.
  void validate() const;
  double pdf(double x) const;
  double sample(Rng& rng) const;
};

// E[(x - l(x)) (u(x) - x)] for x drawn from `mix`, with `levels` equal bins
// spanning [-tau / 2, tau / 2]. Values beyond the range clamp to the end
// levels, which is deterministic and contributes no variance. Each bin is
// integrated by adaptive Gauss-Kronrod quadrature, split at the component
// locations; ToleranceError if a piece misses `abs_tol`.
double expected_sr_variance(const LaplaceMixture& mix, double tau,
                            std::size_t levels, double abs_tol = 1e-10);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// The same expectation estimated by pushing `samples` draws through the
// per-tensor quantizer with range tau / 2: the mean of
// (dequantized - clamp(x))^2. `levels` must equal 2 * qmax of a supported
// bitwidth (2, 6, 14, ..., 254); otherwise ConfigError.
MonteCarloEstimate monte_carlo_sr_variance(const LaplaceMixture& mix,
                                           double tau, std::size_t levels,
                                           std::size_t samples,
                                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Variance bound.

struct VarianceBoundReport {
  std::string profile;
  std::size_t channels = 0;
  std::size_t n_groups = 0;
  int bitwidth = 0;
  double u_dq = 0.0;  // ShiftQuant
  double u_fq = 0.0;  // per-channel
  double u_cq = 0.0;  // per-tensor
  double alpha_effective = 0.0;
  bool bound_satisfied = false;
};

// Closed-form totals for `t` quantized along `axis`:
//   alpha_effective = (U_dq - 2^(2 - 2 N_G) U_cq) / U_fq
//   bound_satisfied = U_dq <= 4 U_fq + 2^(2 - 2 N_G) U_cq
// Throws DegenerateInputError when U_fq = 0.
VarianceBoundReport variance_bound(const DenseTensor& t, std::size_t axis,
                                   std::size_t n_groups, int bitwidth);

enum class ProfileFamily {
  kEqual,          // all channels share one range
  kLogUniform,     // ranges log-uniform over `decades`
  kWorstInGroup,   // each group holds its top range and ranges just above
                   // the next threshold
  kOnePerSlot,     // one channel per power-of-two slot
  kGroupEqual,     // every channel sits exactly on its group's threshold
};

std::string to_string(ProfileFamily family);
// Inverse of to_string; ConfigError for unknown names.
ProfileFamily profile_family_from_string(const std::string& name);

struct ChannelProfile {
  std::string name;
  std::vector<double> ranges;
};

// Random profile of `channels` ranges (kOnePerSlot always yields
// `n_groups` channels) with largest range 1 before a random overall scale.
ChannelProfile generate_profile(ProfileFamily family, std::size_t n_groups,
                                std::size_t channels, Rng& rng,
                                int decades = 3);

// `per_target` profiles of every family for every target group count, in
// (family, target, index) order, all drawn from one generator seeded with
// `seed`.
std::vector<ChannelProfile> profile_set(
    const std::vector<ProfileFamily>& families,
    const std::vector<std::size_t>& target_groups, std::size_t per_target,
    std::size_t channels, std::uint64_t seed);

// `count` ranges log-uniform over [10^-decades, 1].
std::vector<double> log_uniform_ranges(std::size_t count, double decades,
                                       Rng& rng);

// Laplace data of `samples` rows, one column per range, each column rescaled
// so that its max |x| equals the range.
DenseTensor laplace_channels(const std::vector<double>& ranges,
                             std::size_t samples, Rng& rng);

// Every (profile, N_G, bitwidth) combination in that nesting order. Each
// profile's data is drawn once from `seed` and reused across combinations.
std::vector<VarianceBoundReport> variance_bound_sweep(
    const std::vector<ChannelProfile>& profiles,
    const std::vector<std::size_t>& n_groups,
    const std::vector<int>& bitwidths, std::size_t samples_per_channel,
    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Objective / variance agreement.

inline constexpr std::size_t kEquivalenceChannelLimit = 8;

struct EquivalenceReport {
  // Run sizes over the ranges sorted in descending order, fewest runs first.
  std::vector<std::vector<std::size_t>> partitions;
  std::vector<double> objectives;
  // Sum over channels of the closed-form variance of the channel's data at
  // its run's threshold, divided by the channel's squared range.
  std::vector<double> variances;
  std::size_t argmin_objective = 0;
  std::size_t argmin_variance = 0;
  bool coincide() const { return argmin_objective == argmin_variance; }
};

// Enumerates all sorted-contiguous partitions with at most `n_groups` runs.
// Channel data are Laplace samples rescaled to the given ranges. Ranges must
// be positive; more than kEquivalenceChannelLimit channels raises
// ResourceLimitError.
EquivalenceReport objective_variance_equivalence(
    const std::vector<double>& ranges, std::size_t n_groups,
    std::size_t samples, std::uint64_t seed, int bitwidth = 4);

struct EquivalenceInstance {
  std::vector<double> ranges;
  std::uint64_t data_seed = 0;
  EquivalenceReport report;
};

// `instances` problems with `channels` ranges log-uniform over `decades`,
// drawn sequentially from `seed`; instance i samples its data with
// mix64(seed + i + 1).
std::vector<EquivalenceInstance> equivalence_study(
    std::size_t instances, std::size_t channels, std::size_t n_groups,
    std::size_t samples, double decades, int bitwidth, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Normalization probes on Gaussian data.

// Probe i draws x and grad_z (each `size` standard normals) sequentially
// from `seed` and measures both layers with the given gamma.
std::vector<LipschitzProbe> lipschitz_study(std::size_t probes,
                                            std::size_t size, double gamma,
                                            std::uint64_t seed);

// `batches` standard normal batches of `size` values, drawn sequentially
// from `seed`, through sigma_quant_gap at `stats_bitwidth`.
std::vector<SigmaGap> sigma_gap_study(std::size_t batches, std::size_t size,
                                      int stats_bitwidth, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Order statistic.

struct OrderStatisticReport {
  double empirical_mean_max = 0.0;
  double predicted = 0.0;  // mu + lambda * ln(2 n)
  double relative_deviation = 0.0;
};

// Mean over `trials` of the maximum of `count` draws from a
// single-component mixture. Throws ConfigError for other mixtures or
// trials < 1000.
OrderStatisticReport max_order_statistic_check(const LaplaceMixture& mix,
                                               std::size_t count,
                                               std::size_t trials,
                                               std::uint64_t seed);

}  // namespace shiftquant

#endif  // SHIFTQUANT_ANALYSIS_H_
