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

#include "shiftquant/quant_io.h"

#include <fstream>
#include <map>
#include <string>

#include "shiftquant/sqt_io.h"
#include "shiftquant/text.h"

namespace shiftquant {
namespace {

template <typename T, typename F>
std::string join_numbers(const std::vector<T>& values, F format) {
  std::vector<std::string> parts;
  parts.reserve(values.size());
  for (const T& v : values) parts.push_back(format(v));
  return join(parts, ',');
}

struct Entry {
  std::string value;
  std::size_t line = 0;
};

const Entry& require(const std::map<std::string, Entry>& entries,
                     const std::string& key) {
  const auto it = entries.find(key);
  if (it == entries.end()) {
    throw FormatError("metadata is missing key '" + key + "'");
  }
  return it->second;
}

std::vector<double> parse_doubles(const Entry& e) {
  std::vector<double> out;
  for (const std::string& part : split(e.value, ',')) {
    const auto v = parse_double(part);
    if (!v) throw ParseError("bad decimal '" + part + "'", e.line);
    out.push_back(*v);
  }
  return out;
}

std::uint64_t parse_u64(const Entry& e) {
  const auto v = parse_uint(e.value);
  if (!v) throw ParseError("bad integer '" + e.value + "'", e.line);
  return *v;
}

}  // namespace

std::filesystem::path meta_path(const std::filesystem::path& sqt_path) {
  std::filesystem::path p = sqt_path;
  p.replace_extension(".meta");
  return p;
}

void write_meta(std::ostream& out, const QuantizedTensor& q) {
  out << "bitwidth=" << q.bitwidth << '\n';
  out << "granularity=" << to_string(q.kind) << '\n';
  if (q.axis) out << "axis=" << *q.axis << '\n';
  out << "scales=" << join_numbers(q.scales, format_double) << '\n';
  out << "zero_points=" << join_numbers(q.zero_points, format_double) << '\n';
  if (q.plan) {
    out << "n_groups=" << q.plan->n_groups << '\n';
    out << "r_max=" << format_double(q.plan->r_max) << '\n';
    out << "group_map="
        << join_numbers(q.plan->group_of_channel,
                        [](std::uint8_t g) { return format_uint(g); })
        << '\n';
  }
  out << "rounding="
      << (q.rounding == Rounding::kStochastic ? "stochastic" : "nearest")
      << '\n';
  out << "seed=" << q.seed << '\n';
  out << "stream=" << q.stream << '\n';
}

void read_meta(std::istream& in, QuantizedTensor& q) {
  std::map<std::string, Entry> entries;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("expected key=value", n);
    }
    const std::string key(trim(body.substr(0, eq)));
    if (!entries.emplace(key, Entry{std::string(trim(body.substr(eq + 1))), n})
             .second) {
      throw ParseError("duplicate key '" + key + "'", n);
    }
  }

  const Entry& bits = require(entries, "bitwidth");
  q.bitwidth = static_cast<int>(parse_u64(bits));
  if (q.bitwidth < 2 || q.bitwidth > 8) {
    throw ParseError("bitwidth out of range", bits.line);
  }
  const Entry& gran = require(entries, "granularity");
  try {
    q.kind = granularity_kind_from_string(gran.value);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), gran.line);
  }
  q.axis.reset();
  if (q.kind != GranularityKind::kPerTensor) {
    q.axis = parse_u64(require(entries, "axis"));
  }
  q.scales = parse_doubles(require(entries, "scales"));
  q.zero_points = parse_doubles(require(entries, "zero_points"));
  q.plan.reset();
  if (q.kind == GranularityKind::kShiftQuant) {
    GroupPlan plan;
    plan.n_groups = parse_u64(require(entries, "n_groups"));
    const Entry& r_max = require(entries, "r_max");
    const auto r = parse_double(r_max.value);
    if (!r) throw ParseError("bad decimal '" + r_max.value + "'", r_max.line);
    plan.r_max = *r;
    const Entry& map = require(entries, "group_map");
    for (const std::string& part : split(map.value, ',')) {
      const auto g = parse_uint(part);
      if (!g || *g > 255) {
        throw ParseError("bad group index '" + part + "'", map.line);
      }
      plan.group_of_channel.push_back(static_cast<std::uint8_t>(*g));
    }
    try {
      plan.validate();
    } catch (const DimensionError& e) {
      throw ParseError(e.what(), map.line);
    }
    q.plan = std::move(plan);
  }
  const Entry& rounding = require(entries, "rounding");
  if (rounding.value == "stochastic") {
    q.rounding = Rounding::kStochastic;
  } else if (rounding.value == "nearest") {
    q.rounding = Rounding::kNearest;
  } else {
    throw ParseError("unknown rounding '" + rounding.value + "'",
                     rounding.line);
  }
  q.seed = parse_u64(require(entries, "seed"));
  q.stream = parse_u64(require(entries, "stream"));

  const std::size_t units = q.kind == GranularityKind::kPerChannel
                                ? q.scales.size()
                                : std::size_t{1};
  if (q.scales.size() != units || q.zero_points.size() != units) {
    throw FormatError("metadata scale / zero-point counts are inconsistent");
  }
}

void save_quantized(const std::filesystem::path& sqt_path,
                    const QuantizedTensor& q) {
  save_sqt(sqt_path, q.values, DType::kI8);
  std::ofstream meta(meta_path(sqt_path), std::ios::binary);
  if (!meta) {
    throw FormatError("cannot open " + meta_path(sqt_path).string());
  }
  write_meta(meta, q);
  if (!meta) throw FormatError("failed writing " + meta_path(sqt_path).string());
}

QuantizedTensor load_quantized(const std::filesystem::path& sqt_path) {
  QuantizedTensor q;
  q.values = load_int(sqt_path);
  std::ifstream meta(meta_path(sqt_path), std::ios::binary);
  if (!meta) {
    throw FormatError("cannot open " + meta_path(sqt_path).string());
  }
  read_meta(meta, q);
  if (q.axis && *q.axis >= q.values.rank()) {
    throw FormatError("metadata axis out of range for stored values");
  }
  if (q.kind == GranularityKind::kPerChannel &&
      q.scales.size() != q.values.dim(*q.axis)) {
    throw FormatError("metadata scale count does not match channel count");
  }
  if (q.plan && q.plan->channels() != q.values.dim(*q.axis)) {
    throw FormatError("metadata group map does not match channel count");
  }
  const std::int32_t qmax = q.qmax();
  for (std::int32_t v : q.values.data()) {
    if (v > qmax || v < -qmax) {
      throw FormatError("stored value outside the bitwidth's range");
    }
  }
  return q;
}

}  // namespace shiftquant
