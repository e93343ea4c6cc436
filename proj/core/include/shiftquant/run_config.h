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

// Plain-text training configuration: one `key = value` per line, `#` starts
// a comment, blank lines are ignored. Lists are comma separated.
//
// Required keys: dataset, epochs, batch_size, learning_rate, seed.
//
//   key               default    meaning
//   dataset           -          blobs | two_moons | csv
//   dataset_path      -          CSV file (dataset = csv), relative to the
//                                config file
//   samples           1000       generated samples
//   data_seed         seed       generator seed
//   feature_scales    (none)     per-feature multipliers
//   noise_features    0          extra N(0, noise_scale^2) columns
//   noise_scale       1
//   val_fraction      0.2        trailing fraction held out
//   hidden            32         hidden widths
//   norm              l1         l1 | l2 | none
//   stats_bits        8          norm statistics bitwidth
//   quantize_stats    false
//   quantize          true       quantized linear layers
//   bits              4          default for the three bitwidths below
//   weight_bits, activation_bits, gradient_bits
//   n_groups          4
//   rounding          stochastic | nearest (training passes)
//   eval_rounding     nearest    stochastic | nearest (evaluation passes)
//   epochs, batch_size, learning_rate, momentum (0.9), seed
//   master_precision  fp32       fp32 | fp64

#ifndef SHIFTQUANT_RUN_CONFIG_H_
#define SHIFTQUANT_RUN_CONFIG_H_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shiftquant/dataset.h"
#include "shiftquant/trainer.h"

namespace shiftquant {

struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
};

// Throws ParseError (with line) on lines without '=', empty keys or
// duplicate keys.
std::map<std::string, ConfigEntry> parse_key_values(std::istream& in);

struct RunConfig {
  DatasetKind dataset = DatasetKind::kTwoMoons;
  std::filesystem::path dataset_path;
  std::size_t samples = 1000;
  std::uint64_t data_seed = 0;
  std::vector<double> feature_scales;
  std::size_t noise_features = 0;
  double noise_scale = 1.0;
  double val_fraction = 0.2;

  std::vector<std::size_t> hidden = {32};
  std::optional<NormConfig> norm;
  LayerQuant quant;
  std::size_t n_groups = 4;

  TrainConfig train;
};

// Unknown keys and bad values raise ParseError with the line; a missing
// required key raises ConfigError naming the key.
RunConfig parse_run_config(std::istream& in,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Generated or loaded data after feature scaling and noise columns, split
// into (train, val). val is empty when val_fraction is 0.
std::pair<Dataset, Dataset> build_datasets(const RunConfig& cfg);

std::vector<LayerSpec> build_specs(const RunConfig& cfg, std::size_t inputs,
                                   std::size_t classes);

}  // namespace shiftquant

#endif  // SHIFTQUANT_RUN_CONFIG_H_
