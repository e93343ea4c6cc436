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

// Acceptance suite. Each criterion prints one PASS/FAIL line with its
// measurements and wall time; the exit status is nonzero if any fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "shiftquant/analysis.h"
#include "shiftquant/bench.h"
#include "shiftquant/dataset.h"
#include "shiftquant/grouping.h"
#include "shiftquant/norm.h"
#include "shiftquant/quantizer.h"
#include "shiftquant/shiftmm.h"
#include "shiftquant/trainer.h"

namespace sq = shiftquant;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* pattern, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

sq::DenseTensor scaled_columns(std::size_t rows,
                               const std::vector<double>& scales,
                               sq::Rng& rng) {
  std::vector<double> v(rows * scales.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < scales.size(); ++c) {
      v[r * scales.size() + c] = scales[c] * rng.normal();
    }
  }
  return sq::DenseTensor(sq::Shape{rows, scales.size()}, std::move(v));
}

sq::DenseTensor normal_tensor(const sq::Shape& shape, sq::Rng& rng) {
  std::vector<double> v(shape.numel());
  for (double& x : v) x = rng.normal();
  return sq::DenseTensor(shape, std::move(v));
}

std::vector<double> log_spread(std::size_t n, double decades, sq::Rng& rng) {
  std::vector<double> s(n);
  for (double& x : s) x = std::pow(10.0, -decades * rng.uniform());
  return s;
}

// ---------------------------------------------------------------------------

Outcome backend_exactness() {
  sq::Rng rng(1);
  const int bit_options[] = {4, 6, 8};
  const std::size_t instances = 1200;
  std::size_t mismatched = 0, over_tol = 0;
  double worst = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t m = 1 + rng.below(64), k = 1 + rng.below(64),
                      n = 1 + rng.below(64);
    const int bits = bit_options[rng.below(3)];
    const std::size_t n_groups = 1 + rng.below(6);
    sq::QuantConfig cfg;
    cfg.bitwidth = bits;
    cfg.seed = t;
    const sq::QuantizedTensor a = sq::quantize_shiftquant(
        scaled_columns(m, log_spread(k, 3, rng), rng), cfg, 1, n_groups);
    cfg.stream = 1;
    const sq::QuantizedTensor b =
        sq::quantize(normal_tensor(sq::Shape{k, n}, rng), cfg,
                     t % 2 ? sq::Granularity{sq::PerTensor{}}
                           : sq::Granularity{sq::PerChannel{1}});
    const sq::ShiftMMResult s = sq::shiftmm(a, b);
    const sq::ShiftMMResult g = sq::grouped_gemm(a, b);
    if (s.accumulators != g.accumulators) ++mismatched;
    const sq::DenseTensor ad = sq::dequantize(a), bd = sq::dequantize(b);
    const sq::DenseTensor ref = sq::matmul_ref(ad, bd);
    const sq::DenseTensor got = s.dequantize();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double mag = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
          mag += std::abs(ad.at(i, p) * bd.at(p, j));
        }
        if (mag == 0.0) {
          if (got.at(i, j) != 0.0) ++over_tol;
          continue;
        }
        const double rel = std::abs(got.at(i, j) - ref.at(i, j)) / mag;
        worst = std::max(worst, rel);
        if (rel > 1e-10) ++over_tol;
      }
    }
  }
  return {mismatched == 0 && over_tol == 0,
          std::to_string(instances) + " instances, " +
              std::to_string(mismatched) + " accumulator mismatches, " +
              std::to_string(over_tol) + " outputs above 1e-10, worst " +
              fmt("%.2e", worst)};
}

Outcome unbiasedness() {
  sq::Rng rng(2);
  const std::size_t tensors = 100, draws = 10000;
  std::size_t elements = 0, outside = 0;
  double worst_z = 0.0;
  for (std::size_t t = 0; t < tensors; ++t) {
    const sq::DenseTensor x = scaled_columns(4, log_spread(4, 3, rng), rng);
    sq::QuantConfig cfg;
    cfg.bitwidth = 4;
    cfg.seed = 1000 + t;
    const sq::GroupPlan plan =
        sq::pot_group_plan(sq::channel_ranges(x, 1), 4);
    const sq::Granularity g = sq::ShiftGrouped{1, plan};
    std::vector<double> sum(x.numel(), 0.0);
    for (std::size_t d = 0; d < draws; ++d) {
      cfg.stream = d;
      const sq::DenseTensor y = sq::dequantize(sq::quantize(x, cfg, g));
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += y[i];
    }
    const sq::DenseTensor var =
        sq::closed_form_quant_variance(x, cfg, g).per_element;
    for (std::size_t i = 0; i < sum.size(); ++i) {
      ++elements;
      const double err = std::abs(sum[i] / draws - x[i]);
      const double se = std::sqrt(var[i] / static_cast<double>(draws));
      // Elements on the grid have zero spread; allow float rounding only.
      const double allowance = 4 * se + 1e-12 * std::abs(x[i]);
      if (err > allowance) ++outside;
      if (se > 0) worst_z = std::max(worst_z, err / se);
    }
  }
  return {outside == 0,
          std::to_string(tensors) + " tensors, " + std::to_string(elements) +
              " elements, " + std::to_string(outside) +
              " beyond 4 SE, max |z| " + fmt("%.2f", worst_z)};
}

Outcome variance_bound() {
  const auto profiles = sq::profile_set(
      {sq::ProfileFamily::kEqual, sq::ProfileFamily::kLogUniform,
       sq::ProfileFamily::kWorstInGroup, sq::ProfileFamily::kOnePerSlot},
      {4, 5, 6}, 20, 16, 3);
  const auto reports =
      sq::variance_bound_sweep(profiles, {4, 5, 6}, {4, 6, 8}, 256, 3);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t violations = 0, out_of_range = 0;
  for (const auto& r : reports) {
    lo = std::min(lo, r.alpha_effective);
    hi = std::max(hi, r.alpha_effective);
    if (!r.bound_satisfied) ++violations;
    if (r.alpha_effective < 0.95 || r.alpha_effective > 4.05) ++out_of_range;
  }
  return {profiles.size() >= 200 && violations == 0 && out_of_range == 0,
          std::to_string(profiles.size()) + " profiles, " +
              std::to_string(reports.size()) + " configurations, " +
              std::to_string(violations) + " bound violations, alpha in [" +
              fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "]"};
}

// Independent brute force over all cut sets of the sorted ranges.
double exhaustive_min(const std::vector<double>& s, std::size_t max_runs) {
  const std::size_t n = s.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t cuts = 0; cuts < (1u << (n - 1)); ++cuts) {
    if (static_cast<std::size_t>(std::popcount(cuts)) + 1 > max_runs) continue;
    double total = 0.0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i + 1 != n && !((cuts >> i) & 1u)) continue;
      double recip = 0.0;
      for (std::size_t j = start; j <= i; ++j) recip += 1.0 / s[j];
      total += s[start] * recip;
      start = i + 1;
    }
    best = std::min(best, total);
  }
  return best;
}

Outcome grouping_oracle() {
  sq::Rng rng(4);
  std::size_t instances = 0, unequal = 0;
  for (std::size_t n = 1; n <= 10; ++n) {
    for (std::size_t ng = 1; ng <= 3; ++ng) {
      for (int t = 0; t < 100; ++t) {
        std::vector<double> r(n);
        for (double& v : r) v = std::pow(10.0, -3.0 * rng.uniform());
        // Some instances with repeated ranges.
        if (t % 10 == 0 && n > 1) r[n - 1] = r[0];
        ++instances;
        const double dp = sq::optimal_group_plan_dp(r, ng).objective;
        if (dp != exhaustive_min(sq::sorted_positive_ranges(r), ng)) {
          ++unequal;
        }
      }
    }
  }
  std::size_t monotone_checks = 0, monotone_fail = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> r(1 + rng.below(64));
    for (double& v : r) v = std::pow(10.0, -4.0 * rng.uniform());
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t ng = 1; ng <= 8; ++ng) {
      const double obj = sq::grouping_objective(sq::pot_group_plan(r, ng), r);
      ++monotone_checks;
      if (obj > prev) ++monotone_fail;
      prev = obj;
    }
  }
  return {unequal == 0 && monotone_fail == 0,
          std::to_string(instances) + " DP instances, " +
              std::to_string(unequal) + " differ from exhaustive; " +
              std::to_string(monotone_checks) + " monotonicity checks, " +
              std::to_string(monotone_fail) + " increases"};
}

Outcome equivalence() {
  const auto study = sq::equivalence_study(100, 6, 4, 1000, 3.0, 4, 5);
  std::size_t hits = 0;
  for (const auto& inst : study) hits += inst.report.coincide();
  const double rate = static_cast<double>(hits) / study.size();
  return {rate >= 0.95, std::to_string(hits) + "/" +
                            std::to_string(study.size()) +
                            " instances agree on the argmin"};
}

double norm_fd_error(const sq::DenseTensor& x, const sq::DenseTensor& w,
                     const sq::NormState& state, const sq::NormConfig& cfg) {
  sq::NormState s = state;
  const sq::NormOutput fwd = sq::norm_forward(x, s, cfg, true);
  const sq::NormGrads g = sq::norm_backward(w, fwd.cache, state, cfg);
  const auto loss = [&](const std::vector<double>& v) {
    sq::NormState st = state;
    const sq::DenseTensor y =
        sq::norm_forward(sq::DenseTensor(x.shape(), v), st, cfg, true).y;
    double l = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) l += y[i] * w[i];
    return l;
  };
  // Keep the stencil inside the region where every sign(x - mu) is fixed;
  // one step moves x_i - mu by at most h.
  double nearest = std::numeric_limits<double>::infinity();
  for (double d : fwd.cache.centered.values()) {
    nearest = std::min(nearest, std::abs(d));
  }
  const double h = std::min(1e-5, nearest / 4);
  std::vector<double> fd(x.numel());
  double scale = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    std::vector<double> up = x.values(), dn = x.values();
    up[i] += h;
    dn[i] -= h;
    fd[i] = (loss(up) - loss(dn)) / (2 * h);
    scale = std::max(scale, std::abs(fd[i]));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    worst = std::max(worst, std::abs(fd[i] - g.grad_x[i]) / scale);
  }
  return worst;
}

Outcome norm_gradients() {
  sq::Rng rng(6);
  double worst[2] = {0.0, 0.0};
  for (int t = 0; t < 50; ++t) {
    const sq::DenseTensor x = normal_tensor(sq::Shape{4, 3, 5}, rng);
    const sq::DenseTensor w = normal_tensor(sq::Shape{4, 3, 5}, rng);
    sq::NormState state = sq::NormState::identity(3);
    for (std::size_t c = 0; c < 3; ++c) {
      state.gamma[c] = rng.uniform(0.5, 2.0);
      state.beta[c] = rng.uniform(-1.0, 1.0);
    }
    for (int m = 0; m < 2; ++m) {
      sq::NormConfig cfg;
      cfg.mode = m == 0 ? sq::NormMode::kL1 : sq::NormMode::kL2;
      worst[m] = std::max(worst[m], norm_fd_error(x, w, state, cfg));
    }
  }
  return {worst[0] <= 1e-5 && worst[1] <= 1e-5,
          "50 instances, max relative error L1 " + fmt("%.2e", worst[0]) +
              ", L2 " + fmt("%.2e", worst[1])};
}

Outcome lipschitz() {
  const auto probes = sq::lipschitz_study(100, 256, 1.0, 7);
  std::size_t above = 0, bound_above_one = 0;
  double worst = 0.0;
  for (const auto& p : probes) {
    if (p.ratio > p.bound) ++above;
    if (p.bound > 1.0) ++bound_above_one;
    worst = std::max(worst, p.ratio / p.bound);
  }
  return {above == 0 && bound_above_one == 0,
          std::to_string(above) + "/100 probes with ratio > bound (max "
              "ratio/bound " + fmt("%.4f", worst) + "), " +
              std::to_string(bound_above_one) + " bounds above 1"};
}

Outcome sigma_gap() {
  const auto gaps = sq::sigma_gap_study(1000, 256, 8, 8);
  double l1 = 0.0, l2 = 0.0;
  for (const auto& g : gaps) {
    l1 += g.gap_l1;
    l2 += g.gap_l2;
  }
  l1 /= gaps.size();
  l2 /= gaps.size();
  return {l1 < l2, "1000 batches, mean gap L1 " + fmt("%.4f", l1) + ", L2 " +
                       fmt("%.4f", l2)};
}

// Two Gaussian blobs plus one wide label-independent feature: the input
// channels span very different ranges, which is the regime where the group
// count matters.
Outcome desk_training() {
  const std::size_t group_counts[] = {1, 2, 4, 6};
  double mean_acc[4] = {0, 0, 0, 0};
  std::string detail;
  bool within = true;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const sq::Dataset data = sq::add_noise_features(
        sq::make_blobs(2000, 100 + seed, 10.0, 2), 1, 25.0, 200 + seed);
    const auto [train_set, val_set] = sq::split_dataset(data, 1500);
    sq::TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 64;
    cfg.learning_rate = 0.01;
    cfg.momentum = 0.9;
    cfg.seed = seed;
    sq::NormConfig norm;
    norm.mode = sq::NormMode::kL1;
    const auto fp = sq::train(
        sq::mlp_specs(3, {32, 32}, 2, norm, sq::LayerQuant{}, 4), train_set,
        &val_set, cfg);
    const double oracle = fp.final_accuracy("val");
    detail += "seed " + std::to_string(seed) + ": fp32 " +
              fmt("%.3f", oracle);
    sq::LayerQuant q;
    q.enabled = true;
    q.weight_bits = q.activation_bits = q.gradient_bits = 4;
    for (int i = 0; i < 4; ++i) {
      const auto log = sq::train(
          sq::mlp_specs(3, {32, 32}, 2, norm, q, group_counts[i]), train_set,
          &val_set, cfg);
      const double acc = log.final_accuracy("val");
      mean_acc[i] += acc / 3.0;
      detail += " N_G=" + std::to_string(group_counts[i]) + " " +
                fmt("%.3f", acc);
      if (group_counts[i] == 4 && acc < oracle - 0.02) within = false;
    }
    detail += "; ";
  }
  bool monotone = true;
  detail += "mean";
  for (int i = 0; i < 4; ++i) {
    detail += " " + fmt("%.3f", mean_acc[i]);
    if (i > 0 && mean_acc[i] < mean_acc[i - 1]) monotone = false;
  }
  return {within && monotone, detail};
}

Outcome rearrangement() {
  sq::BenchRequest req;
  req.sizes = {{64, 256, 64}, {128, 512, 128}};
  req.n_groups = 4;
  req.bitwidth = 4;
  req.seed = 10;
  const auto rows = sq::run_bench(req);
  bool ok = true;
  std::string detail;
  for (std::size_t s = 0; s < req.sizes.size(); ++s) {
    const sq::BenchReport* shift = nullptr;
    const sq::BenchReport* grouped = nullptr;
    for (const auto& r : rows) {
      if (r.size.m != req.sizes[s].m || r.size.k != req.sizes[s].k) continue;
      if (r.backend == sq::Backend::kShiftMM) shift = &r;
      if (r.backend == sq::Backend::kGroupedGemm) grouped = &r;
    }
    if (!shift || !grouped) return {false, "missing backend rows"};
    ok = ok && shift->rearrangement_bytes == 0 &&
         grouped->rearrangement_bytes > 0;
    detail += std::to_string(req.sizes[s].m) + "x" +
              std::to_string(req.sizes[s].k) + "x" +
              std::to_string(req.sizes[s].n) + ": shiftmm bytes " +
              std::to_string(shift->rearrangement_bytes) +
              ", grouped bytes " +
              std::to_string(grouped->rearrangement_bytes) +
              ", grouped/shiftmm median time " +
              fmt("%.2f", grouped->median_seconds / shift->median_seconds);
    if (s + 1 < req.sizes.size()) detail += "; ";
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "backend exactness", 60, backend_exactness},
      {2, "unbiasedness", 120, unbiasedness},
      {3, "variance bound", 60, variance_bound},
      {4, "grouping oracle", 60, grouping_oracle},
      {5, "objective/variance equivalence", 300, equivalence},
      {6, "normalization gradients", 60, norm_gradients},
      {7, "Lipschitz bound", 60, lipschitz},
      {8, "sigma quantization gap", 60, sigma_gap},
      {9, "desk-scale training", 600, desk_training},
      {10, "rearrangement-free matmul", 120, rearrangement},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - start)
                               .count();
    const bool in_time = seconds < c.time_limit_seconds;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s criterion %d: %s | %s | %.1fs (limit %.0fs)\n",
                pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds, c.time_limit_seconds);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n",
              static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
