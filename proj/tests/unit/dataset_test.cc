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

#include <gtest/gtest.h>

#include <sstream>

#include "shiftquant/errors.h"
#include "test_util.h"

namespace shiftquant {
namespace {

std::string csv_text(const Dataset& ds) {
  std::ostringstream out;
  write_csv(out, ds);
  return out.str();
}

TEST(DatasetTest, GeneratorsAreDeterministic) {
  for (DatasetKind kind : {DatasetKind::kBlobs, DatasetKind::kTwoMoons}) {
    const Dataset a = make_dataset(kind, 200, 9);
    const Dataset b = make_dataset(kind, 200, 9);
    EXPECT_EQ(csv_text(a), csv_text(b));
    EXPECT_EQ(a.features, b.features);
    EXPECT_NE(make_dataset(kind, 200, 10).features, a.features);
    EXPECT_EQ(a.size(), 200u);
    EXPECT_EQ(a.dims(), 2u);
    EXPECT_EQ(a.classes, 2u);
  }
}

TEST(DatasetTest, BlobsAreBalancedAndSeparated) {
  const Dataset ds = make_blobs(1000, 3, 10.0, 3);
  EXPECT_EQ(ds.dims(), 3u);
  std::vector<double> mean0(3, 0.0), mean1(3, 0.0);
  int n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& m = ds.labels[i] == 0 ? mean0 : mean1;
    (ds.labels[i] == 0 ? n0 : n1)++;
    for (std::size_t j = 0; j < 3; ++j) m[j] += ds.features.at(i, j);
  }
  EXPECT_EQ(n0, 500);
  double dist2 = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    const double d = mean0[j] / n0 - mean1[j] / n1;
    dist2 += d * d;
  }
  EXPECT_NEAR(std::sqrt(dist2), 10.0, 0.3);
}

TEST(DatasetTest, TooFewSamples) {
  EXPECT_THROW(make_dataset(DatasetKind::kBlobs, 3, 1), ConfigError);
  EXPECT_THROW(make_dataset(DatasetKind::kCsv, 10, 1), ConfigError);
  EXPECT_THROW(dataset_kind_from_string("spirals"), ConfigError);
}

TEST(DatasetTest, CsvRoundTrip) {
  const Dataset ds = make_two_moons(50, 4);
  std::istringstream in(csv_text(ds));
  const Dataset back = read_csv(in);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.classes, ds.classes);
  testing::TempDir dir("csv");
  save_csv(dir / "d.csv", ds);
  EXPECT_EQ(load_csv(dir / "d.csv").features, ds.features);
}

TEST(DatasetTest, CsvErrorsCarryLineNumbers) {
  const auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      read_csv(in);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of("x0,label\n1.0,0\n2.0\n"), 3u);
  EXPECT_EQ(line_of("x0,label\n1.0,0\nabc,1\n"), 3u);
  EXPECT_EQ(line_of("x0,label\n1.0,0.5\n"), 2u);
  EXPECT_EQ(line_of("x0,label\n1.0,-1\n"), 2u);
}

TEST(DatasetTest, NoiseFeaturesAndSplit) {
  const Dataset ds = make_blobs(100, 1);
  const Dataset noisy = add_noise_features(ds, 2, 25.0, 7);
  EXPECT_EQ(noisy.dims(), 4u);
  EXPECT_EQ(noisy.labels, ds.labels);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(noisy.features.at(i, 0), ds.features.at(i, 0));
  }
  const auto [a, b] = split_dataset(noisy, 70);
  EXPECT_EQ(a.size(), 70u);
  EXPECT_EQ(b.size(), 30u);
  EXPECT_EQ(b.features.at(0, 3), noisy.features.at(70, 3));
  const Dataset scaled = scale_features(ds, {2.0, 0.5});
  EXPECT_EQ(scaled.features.at(5, 0), 2.0 * ds.features.at(5, 0));
}

}  // namespace
}  // namespace shiftquant
