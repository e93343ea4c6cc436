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

// Small classification datasets: synthetic generators and CSV files.
//
// CSV layout: one header row, then one sample per row with the float
// features followed by an integer class label in the last column.

#ifndef SHIFTQUANT_DATASET_H_
#define SHIFTQUANT_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "shiftquant/tensor.h"

namespace shiftquant {

struct Dataset {
  DenseTensor features;  // [n x d]
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dims() const { return features.dim(1); }
};

enum class DatasetKind { kBlobs, kTwoMoons, kCsv };

DatasetKind dataset_kind_from_string(const std::string& name);

// Two isotropic Gaussian blobs (unit variance) whose centers are
// `separation` standard deviations apart, alternating labels.
Dataset make_blobs(std::size_t n, std::uint64_t seed, double separation = 10.0,
                   std::size_t dims = 2);

// Two interleaved half circles with Gaussian jitter `noise`.
Dataset make_two_moons(std::size_t n, std::uint64_t seed, double noise = 0.1);

// `kind` must be a generator (kBlobs, kTwoMoons); n >= 4, else ConfigError.
Dataset make_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed);

// Multiplies feature column j by scales[j].
Dataset scale_features(const Dataset& ds, const std::vector<double>& scales);

// Appends `count` label-independent N(0, scale^2) feature columns.
Dataset add_noise_features(const Dataset& ds, std::size_t count, double scale,
                           std::uint64_t seed);

// First `count` samples and the rest.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds,
                                          std::size_t count);

void write_csv(std::ostream& out, const Dataset& ds);
// Throws ParseError with the 1-based line number of the offending row.
Dataset read_csv(std::istream& in);
void save_csv(const std::filesystem::path& path, const Dataset& ds);
Dataset load_csv(const std::filesystem::path& path);

}  // namespace shiftquant

#endif  // SHIFTQUANT_DATASET_H_
