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

// Batch normalization with an L1 (mean absolute deviation) or L2 (standard
// deviation) spread estimate, optionally with quantized statistics.
//
// Inputs are [N x C] or [N x C x S]; statistics are taken per channel over
// the M = N * S elements of that channel:
//
//   mu = mean(x)       d = x - mu
//   L1: sigma = mean |d|       (times sqrt(pi / 2) with mad_scaling)
//   L2: sigma = sqrt(mean d^2)
//   x_hat = d / (sigma + eps)     y = gamma * x_hat + beta
//
// With raw_norms the 1/M factors are dropped: sigma = ||d||_1 or ||d||_2.
//
// With quantize_stats the layer is fully quantized: the input, mu,
// 1 / (sigma + eps), gamma and beta are stochastically rounded to
// stats_bitwidth before use (statistics first, then normalization), and the
// backward pass treats every rounding as the identity.

#ifndef SHIFTQUANT_NORM_H_
#define SHIFTQUANT_NORM_H_

#include <cstdint>
#include <vector>

#include "shiftquant/tensor.h"

namespace shiftquant {

enum class NormMode { kL1, kL2 };

struct NormConfig {
  NormMode mode = NormMode::kL1;
  double eps = 1e-5;
  int stats_bitwidth = 8;
  bool quantize_stats = false;
  bool mad_scaling = false;
  bool raw_norms = false;
  std::uint64_t seed = 0;

  // Throws ConfigError unless eps > 0 and stats_bitwidth is in [4, 16].
  void validate() const;
};

struct NormState {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mu;
  std::vector<double> running_sigma;
  double momentum = 0.1;

  // gamma = 1, beta = 0, running statistics of a standard input.
  static NormState identity(std::size_t channels, double momentum = 0.1);
  std::size_t channels() const { return gamma.size(); }
  // Throws DimensionError / ConfigError on inconsistent fields.
  void validate(std::size_t channels) const;
};

struct NormCache {
  DenseTensor x_hat;
  // Per channel, as used in the forward pass (quantized when enabled).
  std::vector<double> mu_q;
  std::vector<double> inv_sigma_q;
  // Per channel unquantized spread estimate.
  std::vector<double> sigma;
  // Per channel gamma used in the forward pass.
  std::vector<double> gamma_q;
  // sign(x - mu) per element, used by the L1 backward pass.
  IntTensor sign_map;
  // x - mu per element.
  DenseTensor centered;
  // False when the forward pass used the running statistics.
  bool batch_stats = true;
};

struct NormOutput {
  DenseTensor y;
  NormCache cache;
};

struct NormGrads {
  DenseTensor grad_x;
  std::vector<double> grad_gamma;
  std::vector<double> grad_beta;
};

struct ChannelStats {
  std::vector<double> mu;
  std::vector<double> sigma;
};

// Per-channel mean and spread of `x` under `cfg` (no quantization).
ChannelStats batch_statistics(const DenseTensor& x, const NormConfig& cfg);

// Training mode normalizes with the batch statistics and updates the
// running statistics with `state.momentum`; inference mode normalizes with
// the running statistics and leaves `state` untouched. `stream` keys the
// rounding draws of this call.
NormOutput norm_forward(const DenseTensor& x, NormState& state,
                        const NormConfig& cfg, bool training,
                        std::uint64_t stream = 0);

// Exact gradient of the forward pass (eps included). With batch statistics,
// writing h = gamma * g and s = sign(d):
//   L2: grad_x = inv * (h - mean(h) - sum(h x_hat) * d / (M sigma))
//   L1: grad_x = inv * (h - mean(h) - sum(h x_hat) * k (s - mean(s)) / M)
// where inv = 1 / (sigma + eps) and k is the MAD factor; with raw_norms the
// /M in the last term is dropped.
NormGrads norm_backward(const DenseTensor& grad_y, const NormCache& cache,
                        const NormState& state, const NormConfig& cfg);

struct LipschitzProbe {
  double ratio = 0.0;  // ||grad_x(L1)||^2 / ||grad_x(L2)||^2
  double bound = 0.0;  // (sigma_2 / sigma_1)^2
  double sigma_l1 = 0.0;
  double sigma_l2 = 0.0;
};

// Treats `x` as one normalization channel with gamma = state.gamma[0] and
// sigma taken as the raw L1 / L2 norm of x - mu. Both layers see the same
// upstream gradient `grad_z`. Throws DegenerateInputError when sigma_1 = 0.
LipschitzProbe lipschitz_probe(const DenseTensor& x, const DenseTensor& grad_z,
                               const NormState& state, double eps = 1e-5);

struct SigmaGap {
  double sigma_l1 = 0.0;
  double sigma_l2 = 0.0;
  double gap_l1 = 0.0;
  double gap_l2 = 0.0;
};

// Quantization gap of 1/sigma for each input, each treated as one channel
// with raw-norm sigma. sigma is rounded (stochastically, cfg.stats_bitwidth)
// on one grid shared by both modes and the whole stream, calibrated to the
// largest sigma seen; the gap is |1/Q(sigma) - 1/sigma| / (1/sigma), with
// Q(sigma) floored at one grid step.
std::vector<SigmaGap> sigma_quant_gap(const std::vector<DenseTensor>& inputs,
                                      const NormConfig& cfg);

}  // namespace shiftquant

#endif  // SHIFTQUANT_NORM_H_
