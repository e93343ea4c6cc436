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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "shiftquant/quantizer.h"
#include "shiftquant/random.h"

namespace shiftquant {
namespace {

// Sub-streams of one forward call.
enum : std::uint64_t {
  kInputDraws = 0,
  kMuDraws = 1,
  kInvSigmaDraws = 2,
  kGammaDraws = 3,
  kBetaDraws = 4,
  kDrawKinds = 8,
};

struct Layout {
  std::size_t n = 0, c = 0, s = 1;
  std::size_t m() const { return n * s; }
  std::size_t flat(std::size_t ni, std::size_t ci, std::size_t si) const {
    return (ni * c + ci) * s + si;
  }
};

Layout layout_of(const Shape& shape) {
  if (shape.rank() != 2 && shape.rank() != 3) {
    throw DimensionError("normalization input must be [N x C] or [N x C x S], "
                         "got " + shape.to_string());
  }
  Layout l;
  l.n = shape[0];
  l.c = shape[1];
  l.s = shape.rank() == 3 ? shape[2] : 1;
  return l;
}

// Symmetric stochastic rounding of a vector on one per-tensor grid,
// returned in real units. An all-zero vector is returned unchanged.
std::vector<double> quantize_values(std::span<const double> v, int bits,
                                    std::uint64_t seed, std::uint64_t stream) {
  double range = 0.0;
  for (double x : v) range = std::max(range, std::abs(x));
  std::vector<double> out(v.size(), 0.0);
  if (range == 0.0) return out;
  const std::int32_t qmax = (std::int32_t{1} << (bits - 1)) - 1;
  const double scale = static_cast<double>(qmax) / range;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::int32_t q =
        round_to_grid(scale * v[i], Rounding::kStochastic,
                      counter_uniform(seed, stream, i), qmax);
    out[i] = static_cast<double>(q) / scale;
  }
  return out;
}

double mad_factor(const NormConfig& cfg) {
  return cfg.mad_scaling ? std::sqrt(std::numbers::pi / 2.0) : 1.0;
}

ChannelStats stats_of(std::span<const double> x, const Layout& l,
                      const NormConfig& cfg) {
  ChannelStats st;
  st.mu.assign(l.c, 0.0);
  st.sigma.assign(l.c, 0.0);
  const double m = static_cast<double>(l.m());
  for (std::size_t c = 0; c < l.c; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < l.n; ++n) {
      for (std::size_t s = 0; s < l.s; ++s) sum += x[l.flat(n, c, s)];
    }
    const double mu = sum / m;
    double dev = 0.0;
    for (std::size_t n = 0; n < l.n; ++n) {
      for (std::size_t s = 0; s < l.s; ++s) {
        const double d = x[l.flat(n, c, s)] - mu;
        dev += cfg.mode == NormMode::kL1 ? std::abs(d) : d * d;
      }
    }
    const double denom = cfg.raw_norms ? 1.0 : m;
    st.mu[c] = mu;
    st.sigma[c] = cfg.mode == NormMode::kL1 ? mad_factor(cfg) * dev / denom
                                            : std::sqrt(dev / denom);
  }
  return st;
}

}  // namespace

void NormConfig::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ConfigError("normalization eps must be a positive finite value");
  }
  if (stats_bitwidth < 4 || stats_bitwidth > 16) {
    throw ConfigError("stats bitwidth must be in [4, 16], got " +
                      std::to_string(stats_bitwidth));
  }
}

NormState NormState::identity(std::size_t channels, double momentum) {
  NormState st;
  st.gamma.assign(channels, 1.0);
  st.beta.assign(channels, 0.0);
  st.running_mu.assign(channels, 0.0);
  st.running_sigma.assign(channels, 1.0);
  st.momentum = momentum;
  return st;
}

void NormState::validate(std::size_t channels) const {
  if (gamma.size() != channels || beta.size() != channels ||
      running_mu.size() != channels || running_sigma.size() != channels) {
    throw DimensionError("normalization state has " +
                         std::to_string(gamma.size()) +
                         " channels, input has " + std::to_string(channels));
  }
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw ConfigError("normalization momentum must be in (0, 1)");
  }
  for (double s : running_sigma) {
    if (!(s >= 0.0)) throw ConfigError("running sigma must be >= 0");
  }
}

ChannelStats batch_statistics(const DenseTensor& x, const NormConfig& cfg) {
  return stats_of(x.data(), layout_of(x.shape()), cfg);
}

NormOutput norm_forward(const DenseTensor& x, NormState& state,
                        const NormConfig& cfg, bool training,
                        std::uint64_t stream) {
  cfg.validate();
  const Layout l = layout_of(x.shape());
  state.validate(l.c);
  const bool quant = cfg.quantize_stats;
  const int bits = cfg.stats_bitwidth;
  const auto sub = [&](std::uint64_t kind) {
    return stream * kDrawKinds + kind;
  };

  const std::vector<double> input =
      quant ? quantize_values(x.data(), bits, cfg.seed, sub(kInputDraws))
            : x.values();

  ChannelStats st;
  if (training) {
    st = stats_of(input, l, cfg);
  } else {
    st.mu = state.running_mu;
    st.sigma = state.running_sigma;
  }
  std::vector<double> inv(l.c);
  for (std::size_t c = 0; c < l.c; ++c) inv[c] = 1.0 / (st.sigma[c] + cfg.eps);

  NormCache cache;
  cache.batch_stats = training;
  cache.sigma = st.sigma;
  if (quant) {
    cache.mu_q = quantize_values(st.mu, bits, cfg.seed, sub(kMuDraws));
    cache.inv_sigma_q = quantize_values(inv, bits, cfg.seed, sub(kInvSigmaDraws));
    cache.gamma_q = quantize_values(state.gamma, bits, cfg.seed, sub(kGammaDraws));
  } else {
    cache.mu_q = st.mu;
    cache.inv_sigma_q = inv;
    cache.gamma_q = state.gamma;
  }
  const std::vector<double> beta =
      quant ? quantize_values(state.beta, bits, cfg.seed, sub(kBetaDraws))
            : state.beta;

  std::vector<double> centered(x.numel()), x_hat(x.numel()), y(x.numel());
  std::vector<std::int32_t> signs(x.numel());
  for (std::size_t n = 0; n < l.n; ++n) {
    for (std::size_t c = 0; c < l.c; ++c) {
      for (std::size_t s = 0; s < l.s; ++s) {
        const std::size_t i = l.flat(n, c, s);
        const double d = input[i] - cache.mu_q[c];
        centered[i] = d;
        signs[i] = (d > 0.0) - (d < 0.0);
        x_hat[i] = d * cache.inv_sigma_q[c];
        y[i] = cache.gamma_q[c] * x_hat[i] + beta[c];
      }
    }
  }
  cache.centered = DenseTensor(x.shape(), std::move(centered));
  cache.x_hat = DenseTensor(x.shape(), std::move(x_hat));
  cache.sign_map = IntTensor(x.shape(), std::move(signs));

  if (training) {
    const double m = state.momentum;
    for (std::size_t c = 0; c < l.c; ++c) {
      state.running_mu[c] = (1.0 - m) * state.running_mu[c] + m * st.mu[c];
      state.running_sigma[c] =
          (1.0 - m) * state.running_sigma[c] + m * st.sigma[c];
    }
  }
  return {DenseTensor(x.shape(), std::move(y)), std::move(cache)};
}

NormGrads norm_backward(const DenseTensor& grad_y, const NormCache& cache,
                        const NormState& state, const NormConfig& cfg) {
  if (grad_y.shape() != cache.x_hat.shape()) {
    throw DimensionError("gradient shape " + grad_y.shape().to_string() +
                         " does not match cached input " +
                         cache.x_hat.shape().to_string());
  }
  const Layout l = layout_of(grad_y.shape());
  state.validate(l.c);
  const double m = static_cast<double>(l.m());
  const double denom = cfg.raw_norms ? 1.0 : m;
  const auto g = grad_y.data();
  const auto x_hat = cache.x_hat.data();
  const auto d = cache.centered.data();
  const auto sign = cache.sign_map.data();

  NormGrads out;
  out.grad_gamma.assign(l.c, 0.0);
  out.grad_beta.assign(l.c, 0.0);
  std::vector<double> grad_x(grad_y.numel(), 0.0);

  for (std::size_t c = 0; c < l.c; ++c) {
    const double gamma = cache.gamma_q[c];
    const double inv = cache.inv_sigma_q[c];
    double sum_g = 0.0, sum_gx = 0.0, sum_sign = 0.0;
    for (std::size_t n = 0; n < l.n; ++n) {
      for (std::size_t s = 0; s < l.s; ++s) {
        const std::size_t i = l.flat(n, c, s);
        sum_g += g[i];
        sum_gx += g[i] * x_hat[i];
        sum_sign += sign[i];
      }
    }
    out.grad_gamma[c] = sum_gx;
    out.grad_beta[c] = sum_g;

    const double mean_h = gamma * sum_g / m;
    const double sum_hx = gamma * sum_gx;
    const double mean_sign = sum_sign / m;
    const double sigma = cache.sigma[c];
    for (std::size_t n = 0; n < l.n; ++n) {
      for (std::size_t s = 0; s < l.s; ++s) {
        const std::size_t i = l.flat(n, c, s);
        const double h = gamma * g[i];
        if (!cache.batch_stats) {
          grad_x[i] = inv * h;
          continue;
        }
        double dsigma = 0.0;  // d sigma / d x_i
        if (cfg.mode == NormMode::kL2) {
          if (sigma > 0.0) dsigma = d[i] / (denom * sigma);
        } else {
          dsigma = mad_factor(cfg) * (sign[i] - mean_sign) / denom;
        }
        grad_x[i] = inv * (h - mean_h - sum_hx * dsigma);
      }
    }
  }
  out.grad_x = DenseTensor(grad_y.shape(), std::move(grad_x));
  return out;
}

LipschitzProbe lipschitz_probe(const DenseTensor& x, const DenseTensor& grad_z,
                               const NormState& state, double eps) {
  if (x.numel() != grad_z.numel()) {
    throw DimensionError("probe gradient has " +
                         std::to_string(grad_z.numel()) + " elements, input " +
                         std::to_string(x.numel()));
  }
  const Shape column{x.numel(), 1};
  const DenseTensor xc = x.reshaped(column);
  const DenseTensor gc = grad_z.reshaped(column);

  NormState single = NormState::identity(1);
  single.gamma[0] = state.gamma.at(0);

  LipschitzProbe probe;
  double norm_sq[2] = {0.0, 0.0};
  for (int k = 0; k < 2; ++k) {
    NormConfig cfg;
    cfg.mode = k == 0 ? NormMode::kL1 : NormMode::kL2;
    cfg.raw_norms = true;
    cfg.eps = eps;
    NormState st = single;
    const NormOutput fwd = norm_forward(xc, st, cfg, true);
    (k == 0 ? probe.sigma_l1 : probe.sigma_l2) = fwd.cache.sigma[0];
    const NormGrads grads = norm_backward(gc, fwd.cache, st, cfg);
    for (double v : grads.grad_x.data()) norm_sq[k] += v * v;
  }
  if (probe.sigma_l1 == 0.0) {
    throw DegenerateInputError("L1 deviation is zero; ratio undefined");
  }
  probe.bound = (probe.sigma_l2 * probe.sigma_l2) /
                (probe.sigma_l1 * probe.sigma_l1);
  probe.ratio = norm_sq[1] > 0.0 ? norm_sq[0] / norm_sq[1]
                                 : (norm_sq[0] > 0.0 ? HUGE_VAL : 0.0);
  return probe;
}

std::vector<SigmaGap> sigma_quant_gap(const std::vector<DenseTensor>& inputs,
                                      const NormConfig& cfg) {
  cfg.validate();
  std::vector<SigmaGap> out(inputs.size());
  double sigma_max = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Shape column{inputs[i].numel(), 1};
    const DenseTensor xc = inputs[i].reshaped(column);
    NormConfig l1 = cfg, l2 = cfg;
    l1.mode = NormMode::kL1;
    l2.mode = NormMode::kL2;
    l1.raw_norms = l2.raw_norms = true;
    out[i].sigma_l1 = batch_statistics(xc, l1).sigma[0];
    out[i].sigma_l2 = batch_statistics(xc, l2).sigma[0];
    sigma_max = std::max({sigma_max, out[i].sigma_l1, out[i].sigma_l2});
  }
  if (sigma_max == 0.0) return out;

  const std::int32_t qmax = (std::int32_t{1} << (cfg.stats_bitwidth - 1)) - 1;
  const double step = sigma_max / static_cast<double>(qmax);
  const auto gap = [&](double sigma, std::uint64_t stream, std::uint64_t idx) {
    if (sigma == 0.0) return 0.0;
    const std::int32_t q =
        round_to_grid(sigma / step, Rounding::kStochastic,
                      counter_uniform(cfg.seed, stream, idx), qmax);
    const double sigma_q = static_cast<double>(std::max(q, 1)) * step;
    return std::abs(sigma - sigma_q) / sigma_q;
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].gap_l1 = gap(out[i].sigma_l1, i, 0);
    out[i].gap_l2 = gap(out[i].sigma_l2, i, 1);
  }
  return out;
}

}  // namespace shiftquant
