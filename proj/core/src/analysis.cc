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

#include "shiftquant/analysis.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "shiftquant/grouping.h"
#include "shiftquant/quantizer.h"

namespace shiftquant {
namespace {

int bitwidth_for_levels(std::size_t levels) {
  for (int bits = 2; bits <= 8; ++bits) {
    if (levels == 2 * static_cast<std::size_t>((1 << (bits - 1)) - 1)) {
      return bits;
    }
  }
  throw ConfigError("Monte Carlo variance needs levels = 2 * (2^(b-1) - 1) "
                    "for b in [2, 8], got " + std::to_string(levels));
}

// All compositions of n into at most max_runs positive parts, fewest parts
// first, lexicographic by cut positions within a part count.
std::vector<std::vector<std::size_t>> sorted_partitions(std::size_t n,
                                                        std::size_t max_runs) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t runs = 1; runs <= std::min(n, max_runs); ++runs) {
    // cuts[0] < cuts[1] < ... in [1, n - 1]
    std::vector<std::size_t> cuts(runs - 1);
    std::iota(cuts.begin(), cuts.end(), 1);
    while (true) {
      std::vector<std::size_t> sizes;
      std::size_t prev = 0;
      for (std::size_t c : cuts) {
        sizes.push_back(c - prev);
        prev = c;
      }
      sizes.push_back(n - prev);
      out.push_back(std::move(sizes));
      // Advance to the next combination.
      std::size_t i = cuts.size();
      while (i > 0 && cuts[i - 1] == n - (cuts.size() - i) - 1) --i;
      if (i == 0) break;
      ++cuts[i - 1];
      for (std::size_t j = i; j < cuts.size(); ++j) cuts[j] = cuts[j - 1] + 1;
    }
  }
  return out;
}

}  // namespace

LaplaceMixture LaplaceMixture::single(double location, double scale) {
  return LaplaceMixture{{LaplaceComponent{1.0, location, scale}}};
}

void LaplaceMixture::validate() const {
  if (components.empty()) throw ConfigError("mixture has no components");
  double total = 0.0;
  for (const LaplaceComponent& c : components) {
    if (!(c.weight > 0.0) || !(c.scale > 0.0) || !std::isfinite(c.location)) {
      throw ConfigError("mixture weights and scales must be positive");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ConfigError("mixture weights must sum to 1");
  }
}

double LaplaceMixture::pdf(double x) const {
  double p = 0.0;
  for (const LaplaceComponent& c : components) {
    p += c.weight * std::exp(-std::abs(x - c.location) / c.scale) /
         (2.0 * c.scale);
  }
  return p;
}

double LaplaceMixture::sample(Rng& rng) const {
  double u = rng.uniform();
  for (const LaplaceComponent& c : components) {
    if (u < c.weight) return rng.laplace(c.location, c.scale);
    u -= c.weight;
  }
  const LaplaceComponent& last = components.back();
  return rng.laplace(last.location, last.scale);
}

double expected_sr_variance(const LaplaceMixture& mix, double tau,
                            std::size_t levels, double abs_tol) {
  mix.validate();
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError("quantization range must be positive");
  }
  if (levels < 2) throw ConfigError("need at least 2 quantization bins");

  using Integrator = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double step = tau / static_cast<double>(levels);
  const double start = -0.5 * tau;
  double total = 0.0;
  for (std::size_t m = 0; m < levels; ++m) {
    const double lo = start + static_cast<double>(m) * step;
    const double hi = m + 1 == levels ? 0.5 * tau : lo + step;
    std::vector<double> cuts{lo, hi};
    for (const LaplaceComponent& c : mix.components) {
      if (c.location > lo && c.location < hi) cuts.push_back(c.location);
    }
    std::sort(cuts.begin(), cuts.end());
    const auto integrand = [&](double x) {
      return (x - lo) * (hi - x) * mix.pdf(x);
    };
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      double error = 0.0;
      const double piece =
          Integrator::integrate(integrand, cuts[i], cuts[i + 1], 15, 1e-12,
                                &error);
      if (!(error <= abs_tol)) {
        throw ToleranceError("quadrature error " + std::to_string(error) +
                             " above tolerance on [" + std::to_string(cuts[i]) +
                             ", " + std::to_string(cuts[i + 1]) + "]");
      }
      total += piece;
    }
  }
  return total;
}

MonteCarloEstimate monte_carlo_sr_variance(const LaplaceMixture& mix,
                                           double tau, std::size_t levels,
                                           std::size_t samples,
                                           std::uint64_t seed) {
  mix.validate();
  if (!(tau > 0.0)) throw ConfigError("quantization range must be positive");
  if (samples < 2) throw ConfigError("need at least 2 samples");
  QuantConfig cfg;
  cfg.bitwidth = bitwidth_for_levels(levels);
  cfg.seed = seed;
  cfg.stream = 1;

  Rng rng(seed);
  std::vector<double> xs(samples);
  for (double& x : xs) x = mix.sample(rng);
  const DenseTensor x(Shape{samples}, xs);
  const DenseTensor q =
      dequantize(quantize(x, cfg, PerTensor{0.5 * tau}));

  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double clamped = std::clamp(xs[i], -0.5 * tau, 0.5 * tau);
    const double d = q[i] - clamped;
    const double v = d * d;
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  const double var = m2 / static_cast<double>(samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(samples))};
}

VarianceBoundReport variance_bound(const DenseTensor& t, std::size_t axis,
                                   std::size_t n_groups, int bitwidth) {
  QuantConfig cfg;
  cfg.bitwidth = bitwidth;
  const std::vector<double> ranges = channel_ranges(t, axis, true);
  const GroupPlan plan = pot_group_plan(ranges, n_groups);

  VarianceBoundReport r;
  r.channels = ranges.size();
  r.n_groups = n_groups;
  r.bitwidth = bitwidth;
  r.u_dq = closed_form_quant_variance(t, cfg, ShiftGrouped{axis, plan}).total;
  r.u_fq = closed_form_quant_variance(t, cfg, PerChannel{axis}).total;
  r.u_cq = closed_form_quant_variance(t, cfg, PerTensor{}).total;
  if (r.u_fq == 0.0) {
    throw DegenerateInputError("per-channel variance is zero");
  }
  const double coarse =
      std::ldexp(r.u_cq, 2 - 2 * static_cast<int>(n_groups));
  r.alpha_effective = (r.u_dq - coarse) / r.u_fq;
  r.bound_satisfied = r.u_dq <= 4.0 * r.u_fq + coarse;
  return r;
}

std::string to_string(ProfileFamily family) {
  switch (family) {
    case ProfileFamily::kEqual:
      return "equal";
    case ProfileFamily::kLogUniform:
      return "log-uniform";
    case ProfileFamily::kWorstInGroup:
      return "worst-in-group";
    case ProfileFamily::kOnePerSlot:
      return "one-per-slot";
    case ProfileFamily::kGroupEqual:
      return "group-equal";
  }
  return "unknown";
}

ProfileFamily profile_family_from_string(const std::string& name) {
  for (ProfileFamily f :
       {ProfileFamily::kEqual, ProfileFamily::kLogUniform,
        ProfileFamily::kWorstInGroup, ProfileFamily::kOnePerSlot,
        ProfileFamily::kGroupEqual}) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown profile family '" + name + "'");
}

std::vector<double> log_uniform_ranges(std::size_t count, double decades,
                                       Rng& rng) {
  std::vector<double> r(count);
  for (double& v : r) v = std::pow(10.0, -decades * rng.uniform());
  return r;
}

std::vector<ChannelProfile> profile_set(
    const std::vector<ProfileFamily>& families,
    const std::vector<std::size_t>& target_groups, std::size_t per_target,
    std::size_t channels, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ChannelProfile> out;
  for (ProfileFamily f : families) {
    for (std::size_t g : target_groups) {
      for (std::size_t i = 0; i < per_target; ++i) {
        out.push_back(generate_profile(f, g, channels, rng));
      }
    }
  }
  return out;
}

ChannelProfile generate_profile(ProfileFamily family, std::size_t n_groups,
                                std::size_t channels, Rng& rng, int decades) {
  if (n_groups < 1 || n_groups > kMaxGroups) {
    throw ConfigError("group count out of range");
  }
  if (channels < 1) throw ConfigError("profile needs at least one channel");
  const int last = static_cast<int>(n_groups) - 1;
  std::vector<double> r;
  switch (family) {
    case ProfileFamily::kEqual:
      r.assign(channels, 1.0);
      break;
    case ProfileFamily::kLogUniform:
      for (std::size_t i = 0; i < channels; ++i) {
        r.push_back(std::pow(10.0, -decades * rng.uniform()));
      }
      break;
    case ProfileFamily::kWorstInGroup:
      r.push_back(1.0);
      for (std::size_t i = 1; i < channels; ++i) {
        const int g = last == 0 ? 0 : static_cast<int>(rng.below(last));
        // Alternate between the group's top and just above the next
        // threshold, the widest spread a group can hold.
        r.push_back(i % 2 == 0 ? std::ldexp(1.0, -g)
                               : std::ldexp(1.0, -(g + 1)) * 1.01);
      }
      break;
    case ProfileFamily::kOnePerSlot:
      r.push_back(1.0);
      for (int k = 1; k < last; ++k) {
        // (0.5, 1] keeps the channel inside slot k.
        r.push_back(std::ldexp(1.0, -k) * (1.0 - 0.5 * rng.uniform()));
      }
      if (last > 0) r.push_back(std::ldexp(1.0, -last) * rng.uniform(0.01, 1.0));
      break;
    case ProfileFamily::kGroupEqual:
      r.push_back(1.0);
      for (std::size_t i = 1; i < channels; ++i) {
        r.push_back(std::ldexp(1.0, -static_cast<int>(rng.below(n_groups))));
      }
      break;
  }
  const double scale = std::pow(10.0, rng.uniform(-1.0, 1.0));
  for (double& v : r) v *= scale;
  return {to_string(family), std::move(r)};
}

DenseTensor laplace_channels(const std::vector<double>& ranges,
                             std::size_t samples, Rng& rng) {
  const std::size_t c = ranges.size();
  std::vector<double> data(samples * c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double peak = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
      data[i * c + ch] = rng.laplace(0.0, 1.0);
      peak = std::max(peak, std::abs(data[i * c + ch]));
    }
    const double factor = peak > 0.0 ? ranges[ch] / peak : 0.0;
    for (std::size_t i = 0; i < samples; ++i) data[i * c + ch] *= factor;
  }
  return DenseTensor(Shape{samples, c}, std::move(data));
}

std::vector<VarianceBoundReport> variance_bound_sweep(
    const std::vector<ChannelProfile>& profiles,
    const std::vector<std::size_t>& n_groups,
    const std::vector<int>& bitwidths, std::size_t samples_per_channel,
    std::uint64_t seed) {
  std::vector<VarianceBoundReport> out;
  out.reserve(profiles.size() * n_groups.size() * bitwidths.size());
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    Rng rng(mix64(seed ^ mix64(p)));
    const DenseTensor t =
        laplace_channels(profiles[p].ranges, samples_per_channel, rng);
    for (std::size_t g : n_groups) {
      for (int bits : bitwidths) {
        VarianceBoundReport r = variance_bound(t, 1, g, bits);
        r.profile = profiles[p].name;
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

EquivalenceReport objective_variance_equivalence(
    const std::vector<double>& ranges, std::size_t n_groups,
    std::size_t samples, std::uint64_t seed, int bitwidth) {
  if (ranges.size() > kEquivalenceChannelLimit) {
    throw ResourceLimitError("equivalence study limited to " +
                             std::to_string(kEquivalenceChannelLimit) +
                             " channels, got " +
                             std::to_string(ranges.size()));
  }
  if (ranges.empty() || n_groups < 1) {
    throw ConfigError("need at least one channel and one group");
  }
  for (double r : ranges) {
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw DegenerateInputError("equivalence ranges must be positive");
    }
  }
  const std::vector<double> sorted = sorted_positive_ranges(ranges);
  const std::size_t n = sorted.size();

  Rng rng(seed);
  QuantConfig cfg;
  cfg.bitwidth = bitwidth;
  // var[i][j]: normalized variance of channel i quantized at threshold
  // sorted[j] (j <= i).
  std::vector<std::vector<double>> var(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const DenseTensor channel =
        laplace_channels({sorted[i]}, samples, rng).reshaped(Shape{samples});
    for (std::size_t j = 0; j <= i; ++j) {
      var[i][j] =
          closed_form_quant_variance(channel, cfg, PerTensor{sorted[j]}).total /
          (sorted[i] * sorted[i]);
    }
  }

  EquivalenceReport report;
  report.partitions = sorted_partitions(n, n_groups);
  for (const auto& sizes : report.partitions) {
    report.objectives.push_back(partition_objective(sorted, sizes));
    double v = 0.0;
    std::size_t start = 0;
    for (std::size_t size : sizes) {
      for (std::size_t i = start; i < start + size; ++i) v += var[i][start];
      start += size;
    }
    report.variances.push_back(v);
  }
  for (std::size_t p = 1; p < report.partitions.size(); ++p) {
    if (report.objectives[p] < report.objectives[report.argmin_objective]) {
      report.argmin_objective = p;
    }
    if (report.variances[p] < report.variances[report.argmin_variance]) {
      report.argmin_variance = p;
    }
  }
  return report;
}

std::vector<EquivalenceInstance> equivalence_study(
    std::size_t instances, std::size_t channels, std::size_t n_groups,
    std::size_t samples, double decades, int bitwidth, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EquivalenceInstance> out;
  for (std::size_t i = 0; i < instances; ++i) {
    EquivalenceInstance inst;
    inst.ranges = log_uniform_ranges(channels, decades, rng);
    inst.data_seed = mix64(seed + i + 1);
    inst.report = objective_variance_equivalence(
        inst.ranges, n_groups, samples, inst.data_seed, bitwidth);
    out.push_back(std::move(inst));
  }
  return out;
}

namespace {

DenseTensor normal_vector(std::size_t size, Rng& rng) {
  std::vector<double> v(size);
  for (double& x : v) x = rng.normal();
  return DenseTensor(Shape{size}, std::move(v));
}

}  // namespace

std::vector<LipschitzProbe> lipschitz_study(std::size_t probes,
                                            std::size_t size, double gamma,
                                            std::uint64_t seed) {
  if (size < 2) throw ConfigError("probes need at least 2 values");
  Rng rng(seed);
  NormState state = NormState::identity(1);
  state.gamma[0] = gamma;
  std::vector<LipschitzProbe> out;
  for (std::size_t p = 0; p < probes; ++p) {
    const DenseTensor x = normal_vector(size, rng);
    const DenseTensor g = normal_vector(size, rng);
    out.push_back(lipschitz_probe(x, g, state));
  }
  return out;
}

std::vector<SigmaGap> sigma_gap_study(std::size_t batches, std::size_t size,
                                      int stats_bitwidth, std::uint64_t seed) {
  if (size < 2) throw ConfigError("batches need at least 2 values");
  Rng rng(seed);
  std::vector<DenseTensor> inputs;
  for (std::size_t b = 0; b < batches; ++b) {
    inputs.push_back(normal_vector(size, rng));
  }
  NormConfig cfg;
  cfg.stats_bitwidth = stats_bitwidth;
  cfg.seed = seed;
  return sigma_quant_gap(inputs, cfg);
}

OrderStatisticReport max_order_statistic_check(const LaplaceMixture& mix,
                                               std::size_t count,
                                               std::size_t trials,
                                               std::uint64_t seed) {
  mix.validate();
  if (mix.components.size() != 1) {
    throw ConfigError("order statistic check needs a single component");
  }
  if (trials < 1000) throw ConfigError("order statistic needs >= 1000 trials");
  if (count < 1) throw ConfigError("order statistic needs count >= 1");
  const LaplaceComponent& c = mix.components[0];

  Rng rng(seed);
  double sum = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    double best = -HUGE_VAL;
    for (std::size_t i = 0; i < count; ++i) {
      best = std::max(best, rng.laplace(0.0, c.scale));
    }
    sum += best;
  }
  OrderStatisticReport r;
  // Sampling at location 0 and shifting keeps the translation exact.
  r.empirical_mean_max = sum / static_cast<double>(trials) + c.location;
  r.predicted =
      c.location + c.scale * std::log(2.0 * static_cast<double>(count));
  r.relative_deviation =
      r.predicted != 0.0
          ? std::abs(r.empirical_mean_max - r.predicted) / std::abs(r.predicted)
          : std::abs(r.empirical_mean_max);
  return r;
}

}  // namespace shiftquant
