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

// On-disk form of a QuantizedTensor: the integer values in an SQT1 file and
// a UTF-8 sidecar with the same basename and a `.meta` suffix holding one
// key=value pair per line:
//
//   bitwidth=4
//   granularity=shiftquant          (per-tensor | per-channel | shiftquant)
//   axis=1                          (omitted for per-tensor)
//   scales=12.5                     (comma-separated decimals)
//   zero_points=0
//   n_groups=4                      (shiftquant only)
//   r_max=0.56                      (shiftquant only)
//   group_map=0,1,1,3               (shiftquant only)
//   rounding=stochastic             (stochastic | nearest)
//   seed=7
//   stream=0

#ifndef SHIFTQUANT_QUANT_IO_H_
#define SHIFTQUANT_QUANT_IO_H_

#include <filesystem>
#include <iosfwd>

#include "shiftquant/quantizer.h"

namespace shiftquant {

std::filesystem::path meta_path(const std::filesystem::path& sqt_path);

void write_meta(std::ostream& out, const QuantizedTensor& q);
// Fills every field of `q` except `values`. Throws ParseError naming the
// line for malformed entries and FormatError for missing keys.
void read_meta(std::istream& in, QuantizedTensor& q);

void save_quantized(const std::filesystem::path& sqt_path,
                    const QuantizedTensor& q);
QuantizedTensor load_quantized(const std::filesystem::path& sqt_path);

}  // namespace shiftquant

#endif  // SHIFTQUANT_QUANT_IO_H_
