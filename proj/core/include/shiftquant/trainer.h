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

// Small multilayer perceptrons trained with SGD + momentum on integer
// matmuls.
//
// A quantized linear layer y = x w^T + b runs its three matmuls through
// shiftmm:
//   forward        ShiftQuant(x, inner axis)     x  per-out-channel w
//   loss backward  ShiftQuant(grad_y, inner axis) x  per-in-channel w
//   weight grad    ShiftQuant(grad_y)^T          x  the forward's x_q
// Group plans are recomputed from the current ranges on every call. The
// bias add and the softmax cross-entropy loss stay in floating point.

#ifndef SHIFTQUANT_TRAINER_H_
#define SHIFTQUANT_TRAINER_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftquant/dataset.h"
#include "shiftquant/norm.h"
#include "shiftquant/quantizer.h"
#include "shiftquant/tensor.h"

namespace shiftquant {

enum class LayerKind { kLinear, kNorm, kRelu };

struct LayerQuant {
  bool enabled = false;
  int weight_bits = 4;
  int activation_bits = 4;
  int gradient_bits = 4;
  Rounding rounding = Rounding::kStochastic;
};

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::size_t in = 0;   // linear
  std::size_t out = 0;  // linear output width, or norm channel count
  NormConfig norm;
  LayerQuant quant;
  std::size_t n_groups = 4;

  static LayerSpec linear(std::size_t in, std::size_t out,
                          const LayerQuant& quant = {},
                          std::size_t n_groups = 4);
  static LayerSpec normalization(std::size_t channels, const NormConfig& cfg);
  static LayerSpec relu();

  // Throws ConfigError on zero widths or n_groups outside [1, 63].
  void validate() const;
};

// linear -> [norm] -> relu blocks for each hidden width, then a linear
// classifier. Every linear layer gets `quant` and `n_groups`; a norm layer is
// inserted when `norm` is set.
std::vector<LayerSpec> mlp_specs(std::size_t inputs,
                                 const std::vector<std::size_t>& hidden,
                                 std::size_t classes,
                                 const std::optional<NormConfig>& norm,
                                 const LayerQuant& quant,
                                 std::size_t n_groups);

enum class MasterPrecision { kFp32, kFp64 };

struct TrainConfig {
  int epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  // fp32 rounds the master weights to float after every update. fp64 keeps
  // full double precision (used for gradient checks).
  MasterPrecision master_precision = MasterPrecision::kFp32;
  // Rounding of the quantized layers during evaluation passes. Training
  // always uses each layer's own rounding.
  Rounding eval_rounding = Rounding::kNearest;

  // Throws ConfigError unless epochs >= 1, batch_size >= 2, lr > 0 and
  // momentum in [0, 1).
  void validate() const;
};

// ---------------------------------------------------------------------------
// Linear layer steps.

struct LinearForward {
  DenseTensor y;  // without bias
  // Quantized input, reused by the weight gradient; unset when the layer
  // is not quantized.
  std::optional<QuantizedTensor> x_q;
  double grouping_objective = 0.0;
};

struct LinearBackward {
  DenseTensor grad_x;
  DenseTensor grad_w;  // full precision, [out x in]
};

struct LinearStep {
  DenseTensor y;
  DenseTensor grad_x;
  DenseTensor grad_w;
};

// `x` is [B x in], `w` is [out x in]. The stream keys this call's rounding
// draws; forward and backward use disjoint sub-streams.
LinearForward linear_forward_step(const DenseTensor& x, const DenseTensor& w,
                                  const LayerSpec& spec, std::uint64_t seed,
                                  std::uint64_t stream);
LinearBackward linear_backward_step(const DenseTensor& x,
                                    const LinearForward& fwd,
                                    const DenseTensor& w,
                                    const DenseTensor& grad_y,
                                    const LayerSpec& spec, std::uint64_t seed,
                                    std::uint64_t stream);

// Forward and backward in one call, for a given upstream gradient.
LinearStep quantized_linear_step(const DenseTensor& x, const DenseTensor& w,
                                 const DenseTensor& grad_y,
                                 const LayerSpec& spec, std::uint64_t seed,
                                 std::uint64_t stream);

// ---------------------------------------------------------------------------
// Model.

struct LossResult {
  double loss = 0.0;
  std::size_t correct = 0;
};

// Mean softmax cross-entropy over the batch and its gradient w.r.t. logits.
LossResult softmax_cross_entropy(const DenseTensor& logits,
                                 std::span<const int> labels,
                                 DenseTensor* grad_logits);

struct ForwardStats {
  // Per norm layer: mean over channels of ||x - mu||_1 and ||x - mu||_2 of
  // the layer input.
  std::vector<double> l1_norms;
  std::vector<double> l2_norms;
  // Mean grouping objective of the quantized activations.
  double grouping_objective = 0.0;
  std::size_t quantized_layers = 0;
};

class Mlp {
 public:
  // Weights are drawn He-uniform from `seed`, biases start at zero, norm
  // layers at the identity.
  Mlp(std::vector<LayerSpec> specs, std::uint64_t seed,
      MasterPrecision precision = MasterPrecision::kFp32);

  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t norm_layers() const;

  // Rounding used by inference-mode forward passes (default: each layer's
  // own).
  void set_inference_rounding(std::optional<Rounding> rounding) {
    inference_rounding_ = rounding;
  }

  // Logits for a batch. Training mode uses batch statistics and updates
  // running statistics.
  DenseTensor forward(const DenseTensor& x, bool training,
                      std::uint64_t stream, ForwardStats* stats = nullptr);

  // Forward, loss and backward on a batch in training mode; fills
  // `gradient` (same layout as parameters()) when non-null.
  LossResult loss_and_gradient(const DenseTensor& x, std::span<const int> labels,
                               std::uint64_t stream,
                               std::vector<double>* gradient,
                               ForwardStats* stats = nullptr);

  // All trainable values flattened: per layer, weights then bias, or gamma
  // then beta.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);

  // SGD with momentum on the gradient from loss_and_gradient.
  void sgd_step(std::span<const double> gradient, double learning_rate,
                double momentum);

  // Per layer i: layer<i>.weight/.bias for linear layers and
  // layer<i>.gamma/.beta/.running_mu/.running_sigma for norm layers, each an
  // SQT1 file (f32 for fp32 masters, else f64), plus a model.txt manifest.
  void save(const std::filesystem::path& dir) const;
  // Loads values into a model built from the same specs; FormatError on
  // missing files or mismatched shapes.
  void load(const std::filesystem::path& dir);

 private:
  struct Layer {
    std::vector<double> weight;  // linear: [out x in]
    std::vector<double> bias;
    NormState norm;
    // Forward caches.
    DenseTensor input;
    std::optional<LinearForward> linear_fwd;
    std::optional<NormCache> norm_cache;
  };

  void round_master();
  DenseTensor weight_tensor(std::size_t i) const;

  std::vector<LayerSpec> specs_;
  std::vector<Layer> layers_;
  std::vector<double> velocity_;
  MasterPrecision precision_;
  std::uint64_t seed_;
  std::optional<Rounding> inference_rounding_;
};

// ---------------------------------------------------------------------------
// Training.

struct EpochRecord {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> l1_norms;
  std::vector<double> l2_norms;
};

struct StepRecord {
  std::size_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double grouping_objective = 0.0;
};

struct RunLog {
  std::uint64_t seed = 0;
  std::size_t norm_layers = 0;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;

  // Last recorded accuracy of `split`; ConfigError if none.
  double final_accuracy(const std::string& split) const;
  // Columns: epoch, split, seed, loss, accuracy, l1_norm_<k>, l2_norm_<k>.
  void write_csv(std::ostream& out) const;
  // Columns: step, epoch, seed, loss, grouping_objective.
  void write_steps_csv(std::ostream& out) const;
};

// Evaluation pass in inference mode over the whole dataset.
EpochRecord evaluate(Mlp& model, const Dataset& data, int epoch,
                     const std::string& split, std::uint64_t stream);

// Trains `model` in place. After every epoch the train set and, when
// non-empty, the validation set are evaluated and logged. The gradient
// step count starts at 0. Throws TrainingDivergedError on a non-finite loss.
RunLog train(Mlp& model, const Dataset& train_data, const Dataset* val_data,
             const TrainConfig& cfg);

// Builds the model from `specs` with cfg.seed and trains it.
RunLog train(const std::vector<LayerSpec>& specs, const Dataset& train_data,
             const Dataset* val_data, const TrainConfig& cfg);

}  // namespace shiftquant

#endif  // SHIFTQUANT_TRAINER_H_
