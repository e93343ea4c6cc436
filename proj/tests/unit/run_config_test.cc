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

#include "shiftquant/run_config.h"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "shiftquant/errors.h"
#include "test_util.h"

namespace shiftquant {
namespace {

const char* kMinimal =
    "dataset = blobs\n"
    "epochs = 3\n"
    "batch_size = 16\n"
    "learning_rate = 0.05\n"
    "seed = 11\n";

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in);
}

TEST(RunConfigTest, MinimalConfigUsesDefaults) {
  const RunConfig cfg = parse(kMinimal);
  EXPECT_EQ(cfg.dataset, DatasetKind::kBlobs);
  EXPECT_EQ(cfg.train.epochs, 3);
  EXPECT_EQ(cfg.train.batch_size, 16u);
  EXPECT_EQ(cfg.train.learning_rate, 0.05);
  EXPECT_EQ(cfg.train.seed, 11u);
  EXPECT_EQ(cfg.data_seed, 11u);
  EXPECT_EQ(cfg.n_groups, 4u);
  EXPECT_TRUE(cfg.quant.enabled);
  EXPECT_EQ(cfg.quant.weight_bits, 4);
  ASSERT_TRUE(cfg.norm.has_value());
  EXPECT_EQ(cfg.norm->mode, NormMode::kL1);
  EXPECT_EQ(cfg.train.eval_rounding, Rounding::kNearest);
}

TEST(RunConfigTest, EveryOptionalKey) {
  const RunConfig cfg = parse(std::string(kMinimal) +
                              "# comment\n\n"
                              "samples = 300\n"
                              "data_seed = 4\n"
                              "feature_scales = 1, 0.5\n"
                              "noise_features = 2\n"
                              "noise_scale = 3\n"
                              "val_fraction = 0.25\n"
                              "hidden = 16, 8\n"
                              "norm = l2\n"
                              "stats_bits = 6\n"
                              "quantize_stats = true\n"
                              "bits = 8\n"
                              "gradient_bits = 6\n"
                              "n_groups = 6\n"
                              "rounding = nearest\n"
                              "eval_rounding = stochastic\n"
                              "momentum = 0.5\n"
                              "master_precision = fp64\n");
  EXPECT_EQ(cfg.samples, 300u);
  EXPECT_EQ(cfg.data_seed, 4u);
  EXPECT_EQ(cfg.feature_scales, (std::vector<double>{1.0, 0.5}));
  EXPECT_EQ(cfg.noise_features, 2u);
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(cfg.norm->mode, NormMode::kL2);
  EXPECT_EQ(cfg.norm->stats_bitwidth, 6);
  EXPECT_TRUE(cfg.norm->quantize_stats);
  EXPECT_EQ(cfg.quant.weight_bits, 8);
  EXPECT_EQ(cfg.quant.gradient_bits, 6);
  EXPECT_EQ(cfg.quant.rounding, Rounding::kNearest);
  EXPECT_EQ(cfg.n_groups, 6u);
  EXPECT_EQ(cfg.train.eval_rounding, Rounding::kStochastic);
  EXPECT_EQ(cfg.train.momentum, 0.5);
  EXPECT_EQ(cfg.train.master_precision, MasterPrecision::kFp64);

  const auto [train, val] = build_datasets(cfg);
  EXPECT_EQ(train.size(), 225u);
  EXPECT_EQ(val.size(), 75u);
  EXPECT_EQ(train.dims(), 4u);
  const auto specs = build_specs(cfg, train.dims(), train.classes);
  // linear, norm, relu twice, then the output layer.
  ASSERT_EQ(specs.size(), 7u);
  EXPECT_EQ(specs.back().out, 2u);
}

TEST(RunConfigTest, MissingKeyIsNamed) {
  for (const std::string key :
       {"dataset", "epochs", "batch_size", "learning_rate", "seed"}) {
    std::string text;
    std::istringstream lines(kMinimal);
    for (std::string line; std::getline(lines, line);) {
      if (line.rfind(key + " ", 0) != 0) text += line + "\n";
    }
    try {
      parse(text);
      FAIL() << "expected ConfigError for " << key;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("'" + key + "'"),
                std::string::npos)
          << e.what();
    }
  }
}

TEST(RunConfigTest, BadLinesReportLineNumbers) {
  const auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  EXPECT_EQ(line_of(std::string(kMinimal) + "colour = red\n"), 6u);
  EXPECT_EQ(line_of(std::string(kMinimal) + "just words\n"), 6u);
  EXPECT_EQ(line_of(std::string(kMinimal) + "seed = 3\n"), 6u);
  EXPECT_EQ(line_of("momentum = fast\n" + std::string(kMinimal)), 1u);
  EXPECT_EQ(line_of(std::string(kMinimal) + "norm = l3\n"), 6u);
}

TEST(RunConfigTest, CsvPathIsRelativeToConfig) {
  testing::TempDir dir("cfg");
  save_csv(dir / "data.csv", make_blobs(40, 2));
  {
    std::ofstream out(dir / "run.cfg");
    out << "dataset = csv\ndataset_path = data.csv\nepochs = 1\n"
           "batch_size = 8\nlearning_rate = 0.1\nseed = 1\n";
  }
  const RunConfig cfg = load_run_config(dir / "run.cfg");
  const auto [train, val] = build_datasets(cfg);
  EXPECT_EQ(train.size() + val.size(), 40u);
}

}  // namespace
}  // namespace shiftquant
