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

#ifndef SHIFTQUANT_RANDOM_H_
#define SHIFTQUANT_RANDOM_H_

#include <cstddef>
#include <cstdint>
#include <random>

namespace shiftquant {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Stateless uniform in [0, 1) keyed by (seed, stream, index). Stochastic
// rounding draws come from here so a tensor's rounding does not depend on
// the order elements are visited in.
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t index) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ (stream * 0xD1B54A32D192ED03ULL));
  h = mix64(h ^ (index * 0xAEF17502108EF2D9ULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Sequential generator for synthetic data. The distributions are written out
// here rather than taken from <random>, whose distribution algorithms are
// implementation-defined; mt19937_64's raw stream is fixed by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  double normal();
  double laplace(double location, double scale);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace shiftquant

#endif  // SHIFTQUANT_RANDOM_H_
