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

#include "shiftquant/trainer.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "shiftquant/grouping.h"
#include "shiftquant/random.h"
#include "shiftquant/shiftmm.h"
#include "shiftquant/sqt_io.h"
#include "shiftquant/text.h"

namespace shiftquant {
namespace {

// Rounding sub-streams of one linear layer call.
enum : std::uint64_t {
  kActDraws = 0,
  kWeightFwdDraws = 1,
  kGradDraws = 2,
  kWeightBwdDraws = 3,
  kLinearDrawKinds = 4,
};

// Per-layer slots inside one model-level stream.
constexpr std::uint64_t kLayerSlots = 64;
// Evaluation streams live above every training step.
constexpr std::uint64_t kEvalStreamBase = std::uint64_t{1} << 40;
constexpr std::size_t kEvalChunk = 512;

QuantConfig quant_config(int bits, const LayerQuant& q, std::uint64_t seed,
                         std::uint64_t stream) {
  QuantConfig cfg;
  cfg.bitwidth = bits;
  cfg.rounding = q.rounding;
  cfg.seed = seed;
  cfg.stream = stream;
  return cfg;
}

DenseTensor matmul_nt(const DenseTensor& a, const DenseTensor& b) {
  // a [M x K], b [N x K] -> a b^T
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(m * n, 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += av[i * k + t] * bv[j * k + t];
      out[i * n + j] = acc;
    }
  }
  return DenseTensor(Shape{m, n}, std::move(out));
}

DenseTensor matmul_nn(const DenseTensor& a, const DenseTensor& b) {
  // a [M x K], b [K x N] -> a b
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      const double x = av[i * k + t];
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[t * n + j];
    }
  }
  return DenseTensor(Shape{m, n}, std::move(out));
}

DenseTensor matmul_tn(const DenseTensor& a, const DenseTensor& b) {
  // a [K x M], b [K x N] -> a^T b
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t t = 0; t < k; ++t) {
    for (std::size_t i = 0; i < m; ++i) {
      const double x = av[t * m + i];
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[t * n + j];
    }
  }
  return DenseTensor(Shape{m, n}, std::move(out));
}

void check_linear_shapes(const DenseTensor& x, const DenseTensor& w,
                         const LayerSpec& spec) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1) ||
      w.dim(0) != spec.out || w.dim(1) != spec.in) {
    throw DimensionError("linear layer " + std::to_string(spec.in) + " -> " +
                         std::to_string(spec.out) + " got input " +
                         x.shape().to_string() + " and weight " +
                         w.shape().to_string());
  }
}

double as_master(double v, MasterPrecision p) {
  return p == MasterPrecision::kFp32 ? static_cast<double>(static_cast<float>(v))
                                     : v;
}

void centered_norms(const DenseTensor& x, double& l1, double& l2) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  l1 = l2 = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += x.at(i, j);
    mu /= static_cast<double>(n);
    double a = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x.at(i, j) - mu;
      a += std::abs(d);
      s += d * d;
    }
    l1 += a;
    l2 += std::sqrt(s);
  }
  l1 /= static_cast<double>(c);
  l2 /= static_cast<double>(c);
}

DenseTensor rows_of(const Dataset& data, std::span<const std::size_t> idx) {
  const std::size_t d = data.dims();
  std::vector<double> x(idx.size() * d);
  const auto src = data.features.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(src.begin() + idx[i] * d, d, x.begin() + i * d);
  }
  return DenseTensor(Shape{idx.size(), d}, std::move(x));
}

std::string kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kLinear:
      return "linear";
    case LayerKind::kNorm:
      return "norm";
    case LayerKind::kRelu:
      return "relu";
  }
  return "?";
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs.

LayerSpec LayerSpec::linear(std::size_t in, std::size_t out,
                            const LayerQuant& quant, std::size_t n_groups) {
  LayerSpec s;
  s.kind = LayerKind::kLinear;
  s.in = in;
  s.out = out;
  s.quant = quant;
  s.n_groups = n_groups;
  return s;
}

LayerSpec LayerSpec::normalization(std::size_t channels,
                                   const NormConfig& cfg) {
  LayerSpec s;
  s.kind = LayerKind::kNorm;
  s.in = s.out = channels;
  s.norm = cfg;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

void LayerSpec::validate() const {
  if (n_groups < 1 || n_groups > kMaxGroups) {
    throw ConfigError("n_groups must be in [1, 63], got " +
                      std::to_string(n_groups));
  }
  switch (kind) {
    case LayerKind::kLinear:
      if (in < 1 || out < 1) {
        throw ConfigError("linear layers need in, out >= 1");
      }
      if (quant.enabled) {
        for (int bits : {quant.weight_bits, quant.activation_bits,
                         quant.gradient_bits}) {
          QuantConfig q;
          q.bitwidth = bits;
          q.validate();
        }
      }
      break;
    case LayerKind::kNorm:
      if (out < 1) throw ConfigError("norm layers need channels >= 1");
      norm.validate();
      break;
    case LayerKind::kRelu:
      break;
  }
}

std::vector<LayerSpec> mlp_specs(std::size_t inputs,
                                 const std::vector<std::size_t>& hidden,
                                 std::size_t classes,
                                 const std::optional<NormConfig>& norm,
                                 const LayerQuant& quant,
                                 std::size_t n_groups) {
  std::vector<LayerSpec> specs;
  std::size_t width = inputs;
  for (std::size_t h : hidden) {
    specs.push_back(LayerSpec::linear(width, h, quant, n_groups));
    if (norm) specs.push_back(LayerSpec::normalization(h, *norm));
    specs.push_back(LayerSpec::relu());
    width = h;
  }
  specs.push_back(LayerSpec::linear(width, classes, quant, n_groups));
  return specs;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) {
    throw ConfigError("batch_size must be >= 2 for batch statistics");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must be in [0, 1)");
  }
}

// ---------------------------------------------------------------------------
// Linear steps.

LinearForward linear_forward_step(const DenseTensor& x, const DenseTensor& w,
                                  const LayerSpec& spec, std::uint64_t seed,
                                  std::uint64_t stream) {
  check_linear_shapes(x, w, spec);
  LinearForward out;
  if (!spec.quant.enabled) {
    out.y = matmul_nt(x, w);
    return out;
  }
  const LayerQuant& q = spec.quant;
  const std::uint64_t base = stream * kLinearDrawKinds;
  QuantizedTensor x_q = quantize_shiftquant(
      x, quant_config(q.activation_bits, q, seed, base + kActDraws), 1,
      spec.n_groups);
  const QuantizedTensor w_q =
      quantize(w, quant_config(q.weight_bits, q, seed, base + kWeightFwdDraws),
               PerChannel{0});
  out.y = linear_forward(x_q, w_q).dequantize();
  const std::vector<double> ranges = channel_ranges(x, 1);
  out.grouping_objective = grouping_objective(*x_q.plan, ranges);
  out.x_q = std::move(x_q);
  return out;
}

LinearBackward linear_backward_step(const DenseTensor& x,
                                    const LinearForward& fwd,
                                    const DenseTensor& w,
                                    const DenseTensor& grad_y,
                                    const LayerSpec& spec, std::uint64_t seed,
                                    std::uint64_t stream) {
  check_linear_shapes(x, w, spec);
  if (grad_y.rank() != 2 || grad_y.dim(0) != x.dim(0) ||
      grad_y.dim(1) != spec.out) {
    throw DimensionError("upstream gradient " + grad_y.shape().to_string() +
                         " does not match layer output");
  }
  LinearBackward out;
  if (!spec.quant.enabled) {
    out.grad_x = matmul_nn(grad_y, w);
    out.grad_w = matmul_tn(grad_y, x);
    return out;
  }
  if (!fwd.x_q) {
    throw ModeError("quantized backward needs the forward's quantized input");
  }
  const LayerQuant& q = spec.quant;
  const std::uint64_t base = stream * kLinearDrawKinds;
  const QuantizedTensor g_q = quantize_shiftquant(
      grad_y, quant_config(q.gradient_bits, q, seed, base + kGradDraws), 1,
      spec.n_groups);
  const QuantizedTensor w_q =
      quantize(w, quant_config(q.weight_bits, q, seed, base + kWeightBwdDraws),
               PerChannel{1});
  out.grad_x = loss_backward(g_q, w_q).dequantize();
  out.grad_w = weight_grad(g_q, *fwd.x_q).dequantize();
  return out;
}

LinearStep quantized_linear_step(const DenseTensor& x, const DenseTensor& w,
                                 const DenseTensor& grad_y,
                                 const LayerSpec& spec, std::uint64_t seed,
                                 std::uint64_t stream) {
  LinearForward fwd = linear_forward_step(x, w, spec, seed, stream);
  LinearBackward bwd =
      linear_backward_step(x, fwd, w, grad_y, spec, seed, stream);
  return {std::move(fwd.y), std::move(bwd.grad_x), std::move(bwd.grad_w)};
}

// ---------------------------------------------------------------------------
// Loss.

LossResult softmax_cross_entropy(const DenseTensor& logits,
                                 std::span<const int> labels,
                                 DenseTensor* grad_logits) {
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) {
    throw DimensionError("got " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(b) + " rows");
  }
  LossResult r;
  std::vector<double> grad(b * c);
  for (std::size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(c) + ")");
    }
    double top = logits.at(i, 0);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (logits.at(i, j) > top) {
        top = logits.at(i, j);
        arg = j;
      }
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(logits.at(i, j) - top);
    r.loss += std::log(z) - (logits.at(i, y) - top);
    if (arg == static_cast<std::size_t>(y)) ++r.correct;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(logits.at(i, j) - top) / z;
      grad[i * c + j] =
          (p - (j == static_cast<std::size_t>(y) ? 1.0 : 0.0)) /
          static_cast<double>(b);
    }
  }
  r.loss /= static_cast<double>(b);
  if (grad_logits) *grad_logits = DenseTensor(Shape{b, c}, std::move(grad));
  return r;
}

// ---------------------------------------------------------------------------
// Model.

Mlp::Mlp(std::vector<LayerSpec> specs, std::uint64_t seed,
         MasterPrecision precision)
    : specs_(std::move(specs)), precision_(precision), seed_(seed) {
  if (specs_.empty()) throw ConfigError("model has no layers");
  Rng rng(seed);
  std::size_t width = 0;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    s.validate();
    if (s.kind != LayerKind::kRelu && width != 0 && s.in != width) {
      throw DimensionError("layer " + std::to_string(i) + " expects " +
                           std::to_string(s.in) + " inputs, previous layer " +
                           "produces " + std::to_string(width));
    }
    Layer layer;
    if (s.kind == LayerKind::kLinear) {
      const double bound = std::sqrt(6.0 / static_cast<double>(s.in));
      layer.weight.resize(s.out * s.in);
      for (double& v : layer.weight) v = rng.uniform(-bound, bound);
      layer.bias.assign(s.out, 0.0);
    } else if (s.kind == LayerKind::kNorm) {
      layer.norm = NormState::identity(s.out);
    }
    if (s.kind != LayerKind::kRelu) width = s.out;
    layers_.push_back(std::move(layer));
  }
  round_master();
  velocity_.assign(parameters().size(), 0.0);
}

std::size_t Mlp::norm_layers() const {
  return static_cast<std::size_t>(
      std::count_if(specs_.begin(), specs_.end(), [](const LayerSpec& s) {
        return s.kind == LayerKind::kNorm;
      }));
}

void Mlp::round_master() {
  for (Layer& l : layers_) {
    for (double& v : l.weight) v = as_master(v, precision_);
    for (double& v : l.bias) v = as_master(v, precision_);
    for (double& v : l.norm.gamma) v = as_master(v, precision_);
    for (double& v : l.norm.beta) v = as_master(v, precision_);
  }
}

DenseTensor Mlp::weight_tensor(std::size_t i) const {
  return DenseTensor(Shape{specs_[i].out, specs_[i].in}, layers_[i].weight);
}

DenseTensor Mlp::forward(const DenseTensor& x, bool training,
                         std::uint64_t stream, ForwardStats* stats) {
  if (x.rank() != 2) {
    throw DimensionError("model input must be [batch x features], got " +
                         x.shape().to_string());
  }
  DenseTensor h = x;
  if (stats) *stats = ForwardStats{};
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    Layer& l = layers_[i];
    const std::uint64_t layer_stream = stream * kLayerSlots + i;
    l.input = h;
    switch (s.kind) {
      case LayerKind::kLinear: {
        LayerSpec run = s;
        if (!training && inference_rounding_) {
          run.quant.rounding = *inference_rounding_;
        }
        LinearForward fwd =
            linear_forward_step(h, weight_tensor(i), run, seed_, layer_stream);
        std::vector<double> y = fwd.y.values();
        for (std::size_t r = 0; r < h.dim(0); ++r) {
          for (std::size_t c = 0; c < s.out; ++c) y[r * s.out + c] += l.bias[c];
        }
        if (stats && s.quant.enabled) {
          stats->grouping_objective += fwd.grouping_objective;
          ++stats->quantized_layers;
        }
        h = DenseTensor(fwd.y.shape(), std::move(y));
        l.linear_fwd = std::move(fwd);
        break;
      }
      case LayerKind::kNorm: {
        if (stats) {
          double a, b;
          centered_norms(h, a, b);
          stats->l1_norms.push_back(a);
          stats->l2_norms.push_back(b);
        }
        NormConfig cfg = s.norm;
        cfg.seed = seed_;
        NormOutput out = norm_forward(h, l.norm, cfg, training, layer_stream);
        h = std::move(out.y);
        l.norm_cache = std::move(out.cache);
        break;
      }
      case LayerKind::kRelu: {
        std::vector<double> y = h.values();
        for (double& v : y) v = std::max(v, 0.0);
        h = DenseTensor(h.shape(), std::move(y));
        break;
      }
    }
  }
  if (stats && stats->quantized_layers > 0) {
    stats->grouping_objective /= static_cast<double>(stats->quantized_layers);
  }
  return h;
}

LossResult Mlp::loss_and_gradient(const DenseTensor& x,
                                  std::span<const int> labels,
                                  std::uint64_t stream,
                                  std::vector<double>* gradient,
                                  ForwardStats* stats) {
  const DenseTensor logits = forward(x, true, stream, stats);
  DenseTensor g;
  const LossResult r = softmax_cross_entropy(logits, labels, &g);
  if (!gradient) return r;

  std::vector<std::vector<double>> per_layer(specs_.size());
  for (std::size_t i = specs_.size(); i-- > 0;) {
    const LayerSpec& s = specs_[i];
    Layer& l = layers_[i];
    const std::uint64_t layer_stream = stream * kLayerSlots + i;
    switch (s.kind) {
      case LayerKind::kLinear: {
        const LinearBackward bwd = linear_backward_step(
            l.input, *l.linear_fwd, weight_tensor(i), g, s, seed_,
            layer_stream);
        std::vector<double>& p = per_layer[i];
        p = bwd.grad_w.values();
        for (std::size_t c = 0; c < s.out; ++c) {
          double acc = 0.0;
          for (std::size_t rr = 0; rr < g.dim(0); ++rr) acc += g.at(rr, c);
          p.push_back(acc);
        }
        g = bwd.grad_x;
        break;
      }
      case LayerKind::kNorm: {
        const NormGrads ng =
            norm_backward(g, *l.norm_cache, l.norm, s.norm);
        std::vector<double>& p = per_layer[i];
        p = ng.grad_gamma;
        p.insert(p.end(), ng.grad_beta.begin(), ng.grad_beta.end());
        g = ng.grad_x;
        break;
      }
      case LayerKind::kRelu: {
        std::vector<double> gv = g.values();
        const auto in = l.input.data();
        for (std::size_t k = 0; k < gv.size(); ++k) {
          if (in[k] <= 0.0) gv[k] = 0.0;
        }
        g = DenseTensor(g.shape(), std::move(gv));
        break;
      }
    }
  }
  gradient->clear();
  for (const auto& p : per_layer) {
    gradient->insert(gradient->end(), p.begin(), p.end());
  }
  return r;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const Layer& l = layers_[i];
    if (specs_[i].kind == LayerKind::kLinear) {
      out.insert(out.end(), l.weight.begin(), l.weight.end());
      out.insert(out.end(), l.bias.begin(), l.bias.end());
    } else if (specs_[i].kind == LayerKind::kNorm) {
      out.insert(out.end(), l.norm.gamma.begin(), l.norm.gamma.end());
      out.insert(out.end(), l.norm.beta.begin(), l.norm.beta.end());
    }
  }
  return out;
}

void Mlp::set_parameters(std::span<const double> values) {
  const std::size_t expected = velocity_.size();
  if (values.size() != expected) {
    throw DimensionError("got " + std::to_string(values.size()) +
                         " parameters, model has " + std::to_string(expected));
  }
  std::size_t pos = 0;
  const auto take = [&](std::vector<double>& dst) {
    std::copy_n(values.begin() + pos, dst.size(), dst.begin());
    pos += dst.size();
  };
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    Layer& l = layers_[i];
    if (specs_[i].kind == LayerKind::kLinear) {
      take(l.weight);
      take(l.bias);
    } else if (specs_[i].kind == LayerKind::kNorm) {
      take(l.norm.gamma);
      take(l.norm.beta);
    }
  }
  round_master();
}

void Mlp::sgd_step(std::span<const double> gradient, double learning_rate,
                   double momentum) {
  std::vector<double> p = parameters();
  if (gradient.size() != p.size()) {
    throw DimensionError("gradient has " + std::to_string(gradient.size()) +
                         " entries, model has " + std::to_string(p.size()));
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    velocity_[k] = momentum * velocity_[k] + gradient[k];
    p[k] -= learning_rate * velocity_[k];
  }
  set_parameters(p);
}

void Mlp::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const DType dtype =
      precision_ == MasterPrecision::kFp32 ? DType::kF32 : DType::kF64;
  std::ofstream manifest(dir / "model.txt", std::ios::binary);
  if (!manifest) throw FormatError("cannot write " + (dir / "model.txt").string());
  const auto vec = [](const std::vector<double>& v) {
    return DenseTensor(Shape{v.size()}, v);
  };
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const LayerSpec& s = specs_[i];
    const Layer& l = layers_[i];
    const std::string stem = "layer" + std::to_string(i);
    manifest << i << ' ' << kind_name(s.kind) << ' ' << s.in << ' ' << s.out
             << '\n';
    if (s.kind == LayerKind::kLinear) {
      save_sqt(dir / (stem + ".weight.sqt"), weight_tensor(i), dtype);
      save_sqt(dir / (stem + ".bias.sqt"), vec(l.bias), dtype);
    } else if (s.kind == LayerKind::kNorm) {
      save_sqt(dir / (stem + ".gamma.sqt"), vec(l.norm.gamma), dtype);
      save_sqt(dir / (stem + ".beta.sqt"), vec(l.norm.beta), dtype);
      // Running statistics are not master weights; keep them exact.
      save_sqt(dir / (stem + ".running_mu.sqt"), vec(l.norm.running_mu),
               DType::kF64);
      save_sqt(dir / (stem + ".running_sigma.sqt"), vec(l.norm.running_sigma),
               DType::kF64);
    }
  }
}

void Mlp::load(const std::filesystem::path& dir) {
  const auto read = [&](const std::string& name, std::vector<double>& dst) {
    const std::filesystem::path path = dir / name;
    if (!std::filesystem::exists(path)) {
      throw FormatError("missing checkpoint file " + path.string());
    }
    const DenseTensor t = load_dense(path);
    if (t.numel() != dst.size()) {
      throw FormatError(path.string() + " holds " + std::to_string(t.numel()) +
                        " values, expected " + std::to_string(dst.size()));
    }
    dst = t.values();
  };
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    Layer& l = layers_[i];
    const std::string stem = "layer" + std::to_string(i);
    if (specs_[i].kind == LayerKind::kLinear) {
      read(stem + ".weight.sqt", l.weight);
      read(stem + ".bias.sqt", l.bias);
    } else if (specs_[i].kind == LayerKind::kNorm) {
      read(stem + ".gamma.sqt", l.norm.gamma);
      read(stem + ".beta.sqt", l.norm.beta);
      read(stem + ".running_mu.sqt", l.norm.running_mu);
      read(stem + ".running_sigma.sqt", l.norm.running_sigma);
      l.norm.validate(specs_[i].out);
    }
  }
  round_master();
}

// ---------------------------------------------------------------------------
// Training.

double RunLog::final_accuracy(const std::string& split) const {
  for (auto it = epochs.rbegin(); it != epochs.rend(); ++it) {
    if (it->split == split) return it->accuracy;
  }
  throw ConfigError("run log has no '" + split + "' records");
}

void RunLog::write_csv(std::ostream& out) const {
  std::vector<std::string> header = {"epoch", "split", "seed", "loss",
                                     "accuracy"};
  for (std::size_t k = 0; k < norm_layers; ++k) {
    header.push_back("l1_norm_" + std::to_string(k));
    header.push_back("l2_norm_" + std::to_string(k));
  }
  CsvWriter csv(out, header);
  for (const EpochRecord& e : epochs) {
    std::vector<std::string> row = {format_int(e.epoch), e.split,
                                    format_uint(seed), format_double(e.loss),
                                    format_double(e.accuracy)};
    for (std::size_t k = 0; k < norm_layers; ++k) {
      row.push_back(format_double(e.l1_norms.at(k)));
      row.push_back(format_double(e.l2_norms.at(k)));
    }
    csv.row(row);
  }
}

void RunLog::write_steps_csv(std::ostream& out) const {
  CsvWriter csv(out, {"step", "epoch", "seed", "loss", "grouping_objective"});
  for (const StepRecord& s : steps) {
    csv.row({format_uint(s.step), format_int(s.epoch), format_uint(seed),
             format_double(s.loss), format_double(s.grouping_objective)});
  }
}

EpochRecord evaluate(Mlp& model, const Dataset& data, int epoch,
                     const std::string& split, std::uint64_t stream) {
  EpochRecord rec;
  rec.epoch = epoch;
  rec.split = split;
  const std::size_t n = data.size();
  const std::size_t layers = model.norm_layers();
  rec.l1_norms.assign(layers, 0.0);
  rec.l2_norms.assign(layers, 0.0);
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0, chunk = 0; start < n; start += kEvalChunk, ++chunk) {
    const std::size_t end = std::min(n, start + kEvalChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const DenseTensor x = rows_of(data, idx);
    ForwardStats stats;
    const DenseTensor logits =
        model.forward(x, false, stream * 4096 + chunk, &stats);
    const LossResult r = softmax_cross_entropy(
        logits, std::span<const int>(data.labels).subspan(start, end - start),
        nullptr);
    const double w = static_cast<double>(end - start) / static_cast<double>(n);
    rec.loss += r.loss * w;
    correct += r.correct;
    for (std::size_t k = 0; k < layers; ++k) {
      rec.l1_norms[k] += stats.l1_norms[k] * w;
      rec.l2_norms[k] += stats.l2_norms[k] * w;
    }
  }
  rec.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return rec;
}

RunLog train(Mlp& model, const Dataset& train_data, const Dataset* val_data,
             const TrainConfig& cfg) {
  cfg.validate();
  if (train_data.size() < 2) {
    throw ConfigError("training set needs at least 2 samples");
  }
  const std::size_t classes = model.specs().back().out;
  for (int y : train_data.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ConfigError("label " + std::to_string(y) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
  }
  if (model.specs().front().in != train_data.dims()) {
    throw DimensionError("model expects " +
                         std::to_string(model.specs().front().in) +
                         " features, data has " +
                         std::to_string(train_data.dims()));
  }

  RunLog log;
  log.seed = cfg.seed;
  log.norm_layers = model.norm_layers();
  Rng shuffle(mix64(cfg.seed ^ 0x5DEECE66DULL));
  const std::size_t n = train_data.size();
  std::vector<std::size_t> order(n);
  std::vector<double> grad;
  std::vector<int> labels;
  std::size_t step = 0;

  model.set_inference_rounding(cfg.eval_rounding);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle.below(i + 1)]);
    }
    try {
      for (std::size_t start = 0; start < n;) {
        std::size_t end = std::min(n, start + cfg.batch_size);
        // A trailing single sample joins the previous batch.
        if (n - end == 1) end = n;
        const std::span<const std::size_t> idx(order.data() + start,
                                               end - start);
        const DenseTensor x = rows_of(train_data, idx);
        labels.resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
          labels[k] = train_data.labels[idx[k]];
        }
        ForwardStats stats;
        const LossResult r =
            model.loss_and_gradient(x, labels, step, &grad, &stats);
        if (!std::isfinite(r.loss)) {
          throw TrainingDivergedError("loss is not finite", epoch);
        }
        for (double g : grad) {
          if (!std::isfinite(g)) {
            throw TrainingDivergedError("gradient is not finite", epoch);
          }
        }
        model.sgd_step(grad, cfg.learning_rate, cfg.momentum);
        log.steps.push_back({step, epoch, r.loss, stats.grouping_objective});
        ++step;
        start = end;
      }
      const std::uint64_t eval_stream =
          kEvalStreamBase + static_cast<std::uint64_t>(epoch) * 2;
      log.epochs.push_back(
          evaluate(model, train_data, epoch, "train", eval_stream));
      if (val_data && val_data->size() > 0) {
        log.epochs.push_back(
            evaluate(model, *val_data, epoch, "val", eval_stream + 1));
      }
    } catch (const DegenerateInputError& e) {
      throw TrainingDivergedError(e.what(), epoch);
    }
    if (!std::isfinite(log.epochs.back().loss)) {
      throw TrainingDivergedError("evaluation loss is not finite", epoch);
    }
  }
  return log;
}

RunLog train(const std::vector<LayerSpec>& specs, const Dataset& train_data,
             const Dataset* val_data, const TrainConfig& cfg) {
  cfg.validate();
  Mlp model(specs, cfg.seed, cfg.master_precision);
  return train(model, train_data, val_data, cfg);
}

}  // namespace shiftquant
