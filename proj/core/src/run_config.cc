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

#include <cmath>
#include <fstream>
#include <istream>
#include <set>

#include "shiftquant/text.h"

namespace shiftquant {
namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "dataset",       "dataset_path",    "samples",        "data_seed",
      "feature_scales", "noise_features", "noise_scale",    "val_fraction",
      "hidden",        "norm",            "stats_bits",     "quantize_stats",
      "quantize",      "bits",            "weight_bits",    "activation_bits",
      "gradient_bits", "n_groups",        "rounding",       "eval_rounding",
      "epochs",
      "batch_size",    "learning_rate",   "momentum",       "seed",
      "master_precision"};
  return keys;
}

class Reader {
 public:
  explicit Reader(std::map<std::string, ConfigEntry> entries)
      : entries_(std::move(entries)) {}

  void require(const std::string& key) const {
    if (!entries_.count(key)) {
      throw ConfigError("missing required config key '" + key + "'");
    }
  }
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const ConfigEntry& entry(const std::string& key) const {
    return entries_.at(key);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    const ConfigEntry& e = entries_.at(key);
    throw ParseError(key + ": " + why + " ('" + e.value + "')", e.line);
  }

  std::string str(const std::string& key, const std::string& fallback) const {
    return has(key) ? entry(key).value : fallback;
  }
  double real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const auto v = parse_double(entry(key).value);
    if (!v || !std::isfinite(*v)) fail(key, "expected a number");
    return *v;
  }
  std::uint64_t uint(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const auto v = parse_uint(entry(key).value);
    if (!v) fail(key, "expected a non-negative integer");
    return *v;
  }
  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = entry(key).value;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(key, "expected true or false");
  }
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    if (!has(key)) return out;
    for (const std::string& part : split(entry(key).value, ',')) {
      const auto v = parse_double(part);
      if (!v || !std::isfinite(*v)) fail(key, "expected numbers");
      out.push_back(*v);
    }
    return out;
  }
  std::vector<std::size_t> sizes(const std::string& key,
                                 std::vector<std::size_t> fallback) const {
    if (!has(key)) return fallback;
    std::vector<std::size_t> out;
    if (trim(entry(key).value).empty()) return out;
    for (const std::string& part : split(entry(key).value, ',')) {
      const auto v = parse_uint(part);
      if (!v || *v == 0) fail(key, "expected positive integers");
      out.push_back(static_cast<std::size_t>(*v));
    }
    return out;
  }

 private:
  std::map<std::string, ConfigEntry> entries_;
};

Rounding rounding_of(const Reader& r, const std::string& key,
                     Rounding fallback) {
  const std::string v = r.str(key, "");
  if (v.empty()) return fallback;
  if (v == "stochastic") return Rounding::kStochastic;
  if (v == "nearest") return Rounding::kNearest;
  r.fail(key, "expected stochastic or nearest");
}

}  // namespace

std::map<std::string, ConfigEntry> parse_key_values(std::istream& in) {
  std::map<std::string, ConfigEntry> out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::size_t hash = raw.find('#');
    const std::string_view body =
        trim(std::string_view(raw).substr(0, hash));
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("expected 'key = value'", line);
    }
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));
    if (key.empty()) throw ParseError("empty key", line);
    if (out.count(key)) {
      throw ParseError("duplicate key '" + key + "' (first on line " +
                           std::to_string(out[key].line) + ")",
                       line);
    }
    out[key] = {value, line};
  }
  return out;
}

RunConfig parse_run_config(std::istream& in,
                           const std::filesystem::path& base_dir) {
  auto entries = parse_key_values(in);
  for (const auto& [key, e] : entries) {
    if (!known_keys().count(key)) {
      throw ParseError("unknown key '" + key + "'", e.line);
    }
  }
  const Reader r(std::move(entries));
  for (const char* key :
       {"dataset", "epochs", "batch_size", "learning_rate", "seed"}) {
    r.require(key);
  }

  RunConfig cfg;
  try {
    cfg.dataset = dataset_kind_from_string(r.entry("dataset").value);
  } catch (const ConfigError&) {
    r.fail("dataset", "expected blobs, two_moons or csv");
  }
  if (cfg.dataset == DatasetKind::kCsv) {
    r.require("dataset_path");
    cfg.dataset_path = base_dir / r.entry("dataset_path").value;
  }
  cfg.samples = static_cast<std::size_t>(r.uint("samples", 1000));
  cfg.train.seed = r.uint("seed", 0);
  cfg.data_seed = r.uint("data_seed", cfg.train.seed);
  cfg.feature_scales = r.reals("feature_scales");
  cfg.noise_features = static_cast<std::size_t>(r.uint("noise_features", 0));
  cfg.noise_scale = r.real("noise_scale", 1.0);
  cfg.val_fraction = r.real("val_fraction", 0.2);
  if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0)) {
    r.fail("val_fraction", "expected a value in [0, 1)");
  }

  cfg.hidden = r.sizes("hidden", {32});
  const std::string norm = r.str("norm", "l1");
  if (norm != "none") {
    NormConfig n;
    if (norm == "l1") {
      n.mode = NormMode::kL1;
    } else if (norm == "l2") {
      n.mode = NormMode::kL2;
    } else {
      r.fail("norm", "expected l1, l2 or none");
    }
    n.stats_bitwidth = static_cast<int>(r.uint("stats_bits", 8));
    n.quantize_stats = r.boolean("quantize_stats", false);
    cfg.norm = n;
  }

  cfg.quant.enabled = r.boolean("quantize", true);
  const int bits = static_cast<int>(r.uint("bits", 4));
  cfg.quant.weight_bits = static_cast<int>(r.uint("weight_bits", bits));
  cfg.quant.activation_bits = static_cast<int>(r.uint("activation_bits", bits));
  cfg.quant.gradient_bits = static_cast<int>(r.uint("gradient_bits", bits));
  cfg.quant.rounding = rounding_of(r, "rounding", Rounding::kStochastic);
  cfg.train.eval_rounding = rounding_of(r, "eval_rounding", Rounding::kNearest);
  cfg.n_groups = static_cast<std::size_t>(r.uint("n_groups", 4));

  const std::uint64_t epochs = r.uint("epochs", 0);
  if (epochs < 1 || epochs > 1'000'000) r.fail("epochs", "expected >= 1");
  cfg.train.epochs = static_cast<int>(epochs);
  cfg.train.batch_size = static_cast<std::size_t>(r.uint("batch_size", 0));
  cfg.train.learning_rate = r.real("learning_rate", 0.0);
  cfg.train.momentum = r.real("momentum", 0.9);
  const std::string precision = r.str("master_precision", "fp32");
  if (precision == "fp32") {
    cfg.train.master_precision = MasterPrecision::kFp32;
  } else if (precision == "fp64") {
    cfg.train.master_precision = MasterPrecision::kFp64;
  } else {
    r.fail("master_precision", "expected fp32 or fp64");
  }
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_run_config(in, path.parent_path());
}

std::pair<Dataset, Dataset> build_datasets(const RunConfig& cfg) {
  Dataset data = cfg.dataset == DatasetKind::kCsv
                     ? load_csv(cfg.dataset_path)
                     : make_dataset(cfg.dataset, cfg.samples, cfg.data_seed);
  if (!cfg.feature_scales.empty()) {
    data = scale_features(data, cfg.feature_scales);
  }
  if (cfg.noise_features > 0) {
    data = add_noise_features(data, cfg.noise_features, cfg.noise_scale,
                              cfg.data_seed ^ 0x9E3779B97F4A7C15ULL);
  }
  const auto val = static_cast<std::size_t>(
      std::floor(cfg.val_fraction * static_cast<double>(data.size())));
  if (val == 0) return {std::move(data), Dataset{}};
  return split_dataset(data, data.size() - val);
}

std::vector<LayerSpec> build_specs(const RunConfig& cfg, std::size_t inputs,
                                   std::size_t classes) {
  return mlp_specs(inputs, cfg.hidden, classes, cfg.norm, cfg.quant,
                   cfg.n_groups);
}

}  // namespace shiftquant
