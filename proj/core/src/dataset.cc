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

#include "shiftquant/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "shiftquant/random.h"
#include "shiftquant/text.h"

namespace shiftquant {
namespace {

void check_size(std::size_t n) {
  if (n < 4) {
    throw ConfigError("datasets need at least 4 samples, got " +
                      std::to_string(n));
  }
}

}  // namespace

DatasetKind dataset_kind_from_string(const std::string& name) {
  if (name == "blobs") return DatasetKind::kBlobs;
  if (name == "two_moons") return DatasetKind::kTwoMoons;
  if (name == "csv") return DatasetKind::kCsv;
  throw ConfigError("unknown dataset '" + name + "'");
}

Dataset make_blobs(std::size_t n, std::uint64_t seed, double separation,
                   std::size_t dims) {
  check_size(n);
  if (dims < 1) throw ConfigError("blobs need at least one dimension");
  Rng rng(seed);
  // Centers at +-separation / 2 along a random unit direction.
  std::vector<double> dir(dims);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : dir) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& v : dir) v /= norm;

  Dataset ds;
  ds.classes = 2;
  std::vector<double> x(n * dims);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double side = label == 0 ? -0.5 : 0.5;
    for (std::size_t j = 0; j < dims; ++j) {
      x[i * dims + j] = side * separation * dir[j] + rng.normal();
    }
    ds.labels.push_back(label);
  }
  ds.features = DenseTensor(Shape{n, dims}, std::move(x));
  return ds;
}

Dataset make_two_moons(std::size_t n, std::uint64_t seed, double noise) {
  check_size(n);
  Rng rng(seed);
  Dataset ds;
  ds.classes = 2;
  std::vector<double> x(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = std::numbers::pi * rng.uniform();
    double px, py;
    if (label == 0) {
      px = std::cos(t);
      py = std::sin(t);
    } else {
      px = 1.0 - std::cos(t);
      py = 0.5 - std::sin(t);
    }
    x[2 * i] = px + noise * rng.normal();
    x[2 * i + 1] = py + noise * rng.normal();
    ds.labels.push_back(label);
  }
  ds.features = DenseTensor(Shape{n, 2}, std::move(x));
  return ds;
}

Dataset make_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed) {
  switch (kind) {
    case DatasetKind::kBlobs:
      return make_blobs(n, seed);
    case DatasetKind::kTwoMoons:
      return make_two_moons(n, seed);
    case DatasetKind::kCsv:
      break;
  }
  throw ConfigError("csv datasets are loaded with load_csv");
}

Dataset scale_features(const Dataset& ds, const std::vector<double>& scales) {
  const std::size_t d = ds.dims();
  if (scales.size() != d) {
    throw DimensionError("got " + std::to_string(scales.size()) +
                         " scales for " + std::to_string(d) + " features");
  }
  std::vector<double> x = ds.features.values();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] *= scales[i % d];
  Dataset out = ds;
  out.features = DenseTensor(ds.features.shape(), std::move(x));
  return out;
}

Dataset add_noise_features(const Dataset& ds, std::size_t count, double scale,
                           std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = ds.size(), d = ds.dims(), nd = d + count;
  std::vector<double> x(n * nd);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x[i * nd + j] = ds.features.at(i, j);
    for (std::size_t j = d; j < nd; ++j) x[i * nd + j] = scale * rng.normal();
  }
  Dataset out = ds;
  out.features = DenseTensor(Shape{n, nd}, std::move(x));
  return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds,
                                          std::size_t count) {
  if (count == 0 || count >= ds.size()) {
    throw ConfigError("split point must leave both parts non-empty");
  }
  const std::size_t d = ds.dims();
  const auto& x = ds.features.values();
  Dataset a, b;
  a.classes = b.classes = ds.classes;
  a.features = DenseTensor(
      Shape{count, d}, std::vector<double>(x.begin(), x.begin() + count * d));
  b.features = DenseTensor(
      Shape{ds.size() - count, d},
      std::vector<double>(x.begin() + count * d, x.end()));
  a.labels.assign(ds.labels.begin(), ds.labels.begin() + count);
  b.labels.assign(ds.labels.begin() + count, ds.labels.end());
  return {std::move(a), std::move(b)};
}

void write_csv(std::ostream& out, const Dataset& ds) {
  const std::size_t d = ds.dims();
  std::vector<std::string> header;
  for (std::size_t j = 0; j < d; ++j) header.push_back("x" + std::to_string(j));
  header.push_back("label");
  out << join(header, ',') << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out << format_double(ds.features.at(i, j)) << ',';
    }
    out << ds.labels[i] << '\n';
  }
}

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  const std::size_t columns = split(line, ',').size();
  if (columns < 2) {
    throw ParseError("need at least one feature and a label column", 1);
  }
  const std::size_t d = columns - 1;
  std::vector<double> x;
  Dataset ds;
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) +
                           " columns, got " + std::to_string(cells.size()),
                       line_no);
    }
    for (std::size_t j = 0; j < d; ++j) {
      const auto v = parse_double(cells[j]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError("bad feature value '" + cells[j] + "'", line_no);
      }
      x.push_back(*v);
    }
    const auto label = parse_int(cells[d]);
    if (!label || *label < 0 || *label > 1'000'000) {
      throw ParseError("bad label '" + cells[d] + "'", line_no);
    }
    ds.labels.push_back(static_cast<int>(*label));
    max_label = std::max(max_label, static_cast<int>(*label));
  }
  if (ds.labels.empty()) throw ParseError("no data rows", line_no);
  const std::size_t n = ds.labels.size();
  ds.features = DenseTensor(Shape{n, d}, std::move(x));
  ds.classes = static_cast<std::size_t>(std::max(max_label + 1, 2));
  return ds;
}

void save_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string());
  write_csv(out, ds);
  if (!out) throw FormatError("failed writing " + path.string());
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_csv(in);
}

}  // namespace shiftquant
