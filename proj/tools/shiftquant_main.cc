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

// shiftquant: quantize / dequantize tensors, benchmark the matmul backends,
// train small models and run the numerical studies. Every CSV carries the
// seed and the configuration needed to regenerate its rows.
//
// Exit codes: 0 success, 1 usage error, 2 invalid input or failed
// operation, 3 internal correctness check failed, 4 training diverged.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shiftquant/analysis.h"
#include "shiftquant/bench.h"
#include "shiftquant/dataset.h"
#include "shiftquant/errors.h"
#include "shiftquant/quant_io.h"
#include "shiftquant/quantizer.h"
#include "shiftquant/run_config.h"
#include "shiftquant/sqt_io.h"
#include "shiftquant/text.h"
#include "shiftquant/trainer.h"

namespace sq = shiftquant;

namespace {

constexpr int kUsageExit = 1;
constexpr int kErrorExit = 2;
constexpr int kCorrectnessExit = 3;
constexpr int kDivergedExit = 4;

// "-" is standard output.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw sq::FormatError("cannot open " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

template <typename T>
std::string join_values(const std::vector<T>& v, char sep = ';') {
  std::vector<std::string> parts;
  for (const T& x : v) {
    if constexpr (std::is_floating_point_v<T>) {
      parts.push_back(sq::format_double(x));
    } else {
      parts.push_back(std::to_string(x));
    }
  }
  return sq::join(parts, sep);
}

std::string b(bool v) { return v ? "true" : "false"; }

// ---------------------------------------------------------------------------
// quantize / dequantize

struct QuantizeArgs {
  std::string input, output, mode = "shiftquant", rounding = "stochastic";
  int bits = 4;
  std::size_t groups = 4, axis = 1;
  std::uint64_t seed = 0, stream = 0;
};

struct UsageError {
  std::string message;
};

// A missing file is an I/O error; a file that is not SQT1 is a usage error.
template <typename Loader>
auto load_input(const std::string& path, Loader loader) {
  if (!std::filesystem::exists(path)) {
    throw sq::FormatError("cannot open " + path);
  }
  try {
    return loader(path);
  } catch (const sq::FormatError& e) {
    throw UsageError{path + ": " + e.what()};
  }
}

int run_quantize(const QuantizeArgs& a) {
  const sq::DenseTensor t = load_input(
      a.input, [](const std::string& p) { return sq::load_dense(p); });
  sq::QuantConfig cfg;
  cfg.bitwidth = a.bits;
  cfg.seed = a.seed;
  cfg.stream = a.stream;
  cfg.rounding = a.rounding == "nearest" ? sq::Rounding::kNearest
                                         : sq::Rounding::kStochastic;
  sq::QuantizedTensor q;
  if (a.mode == "shiftquant") {
    q = sq::quantize_shiftquant(t, cfg, a.axis, a.groups);
  } else if (a.mode == "per-channel") {
    q = sq::quantize(t, cfg, sq::PerChannel{a.axis});
  } else {
    q = sq::quantize(t, cfg, sq::PerTensor{});
  }
  sq::save_quantized(a.output, q);
  return 0;
}

int run_dequantize(const std::string& input, const std::string& output,
                   const std::string& dtype) {
  const sq::QuantizedTensor q = load_input(
      input, [](const std::string& p) { return sq::load_quantized(p); });
  sq::save_sqt(output, sq::dequantize(q),
               dtype == "f32" ? sq::DType::kF32 : sq::DType::kF64);
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::vector<std::string> sizes = {"64x64x64"};
  std::vector<std::string> backends = {"shiftmm", "grouped_gemm",
                                       "per_tensor_int", "float_ref"};
  int bits = 4;
  std::size_t groups = 4, repeats = sq::kMinRepeats;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int run_bench(const BenchArgs& a) {
  sq::BenchRequest req;
  for (const std::string& s : a.sizes) {
    req.sizes.push_back(sq::parse_matmul_size(s));
  }
  req.backends.clear();
  for (const std::string& name : a.backends) {
    req.backends.push_back(sq::backend_from_string(name));
  }
  req.bitwidth = a.bits;
  req.n_groups = a.groups;
  req.repeats = a.repeats;
  req.seed = a.seed;
  // Throws before anything is written if a correctness gate fails.
  const std::vector<sq::BenchReport> rows = sq::run_bench(req);
  Output out(a.out);
  sq::write_bench_csv(out.stream(), rows, a.seed);
  return 0;
}

// ---------------------------------------------------------------------------
// train

int run_train(const std::string& config, const std::string& out_dir) {
  const sq::RunConfig cfg = sq::load_run_config(config);
  const auto [train_data, val_data] = sq::build_datasets(cfg);
  const std::size_t classes =
      std::max(train_data.classes, val_data.classes);
  sq::Mlp model(sq::build_specs(cfg, train_data.dims(), classes),
                cfg.train.seed, cfg.train.master_precision);
  const sq::RunLog log = sq::train(
      model, train_data, val_data.size() > 0 ? &val_data : nullptr,
      cfg.train);

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "runlog.csv", std::ios::binary);
    log.write_csv(f);
  }
  {
    std::ofstream f(dir / "steps.csv", std::ios::binary);
    log.write_steps_csv(f);
  }
  model.save(dir / "checkpoint");
  std::filesystem::copy_file(
      config, dir / "config.cfg",
      std::filesystem::copy_options::overwrite_existing);
  std::cout << "train accuracy " << sq::format_double(log.final_accuracy("train"));
  if (val_data.size() > 0) {
    std::cout << ", val accuracy "
              << sq::format_double(log.final_accuracy("val"));
  }
  std::cout << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

struct BoundArgs {
  std::vector<std::string> families = {"equal", "log-uniform",
                                       "worst-in-group", "one-per-slot"};
  std::vector<std::size_t> targets = {4, 5, 6};
  std::vector<std::size_t> groups = {4, 5, 6};
  std::vector<int> bits = {4, 6, 8};
  std::size_t per_target = 20, channels = 16, samples = 256;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int run_variance_bound(const BoundArgs& a) {
  std::vector<sq::ProfileFamily> families;
  for (const std::string& f : a.families) {
    families.push_back(sq::profile_family_from_string(f));
  }
  const auto profiles =
      sq::profile_set(families, a.targets, a.per_target, a.channels, a.seed);
  const auto reports =
      sq::variance_bound_sweep(profiles, a.groups, a.bits, a.samples, a.seed);
  Output out(a.out);
  sq::CsvWriter csv(out.stream(),
                    {"profile_index", "family", "families", "targets",
                     "per_target", "channels", "n_groups", "bitwidth",
                     "samples", "seed", "u_dq", "u_fq", "u_cq",
                     "alpha_effective", "bound_satisfied"});
  const std::size_t per_profile = a.groups.size() * a.bits.size();
  std::size_t violations = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const sq::VarianceBoundReport& r = reports[i];
    violations += !r.bound_satisfied;
    csv.row({sq::format_uint(i / per_profile), r.profile,
             sq::join(a.families, ';'), join_values(a.targets),
             sq::format_uint(a.per_target), sq::format_uint(r.channels),
             sq::format_uint(r.n_groups), sq::format_int(r.bitwidth),
             sq::format_uint(a.samples), sq::format_uint(a.seed),
             sq::format_double(r.u_dq), sq::format_double(r.u_fq),
             sq::format_double(r.u_cq), sq::format_double(r.alpha_effective),
             b(r.bound_satisfied)});
  }
  if (violations > 0) {
    std::cerr << violations << " rows violate the variance bound\n";
    return kCorrectnessExit;
  }
  return 0;
}

struct EquivalenceArgs {
  std::size_t instances = 100, channels = 6, groups = 4, samples = 1000;
  int bits = 4;
  double decades = 3.0;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int run_equivalence(const EquivalenceArgs& a) {
  const auto study =
      sq::equivalence_study(a.instances, a.channels, a.groups, a.samples,
                            a.decades, a.bits, a.seed);
  Output out(a.out);
  sq::CsvWriter csv(
      out.stream(),
      {"instance", "seed", "data_seed", "channels", "n_groups", "bitwidth",
       "samples", "decades", "ranges", "partitions", "argmin_objective",
       "argmin_variance", "min_objective", "min_variance", "coincide"});
  std::size_t hits = 0;
  for (std::size_t i = 0; i < study.size(); ++i) {
    const sq::EquivalenceReport& r = study[i].report;
    hits += r.coincide();
    csv.row({sq::format_uint(i), sq::format_uint(a.seed),
             sq::format_uint(study[i].data_seed), sq::format_uint(a.channels),
             sq::format_uint(a.groups), sq::format_int(a.bits),
             sq::format_uint(a.samples), sq::format_double(a.decades),
             join_values(study[i].ranges), sq::format_uint(r.partitions.size()),
             join_values(r.partitions[r.argmin_objective], '-'),
             join_values(r.partitions[r.argmin_variance], '-'),
             sq::format_double(r.objectives[r.argmin_objective]),
             sq::format_double(r.variances[r.argmin_variance]),
             b(r.coincide())});
  }
  std::cerr << "argmin coincidence " << hits << "/" << study.size() << '\n';
  return 0;
}

struct LaplaceArgs {
  std::string mixture = "1:0:1";
  double tau = 8.0;
  std::vector<int> bits = {2, 3, 4, 6, 8};
  std::size_t samples = 200000;
  std::uint64_t seed = 0;
  std::string out = "-";
};

sq::LaplaceMixture parse_mixture(const std::string& text) {
  sq::LaplaceMixture mix;
  for (const std::string& part : sq::split(text, ';')) {
    const std::vector<std::string> f = sq::split(part, ':');
    if (f.size() != 3) {
      throw sq::ParseError("mixture component '" + part +
                               "' is not weight:location:scale",
                           0);
    }
    sq::LaplaceComponent c;
    const auto w = sq::parse_double(f[0]);
    const auto l = sq::parse_double(f[1]);
    const auto s = sq::parse_double(f[2]);
    if (!w || !l || !s) {
      throw sq::ParseError("bad number in mixture component '" + part + "'", 0);
    }
    c.weight = *w;
    c.location = *l;
    c.scale = *s;
    mix.components.push_back(c);
  }
  mix.validate();
  return mix;
}

int run_laplace(const LaplaceArgs& a) {
  const sq::LaplaceMixture mix = parse_mixture(a.mixture);
  Output out(a.out);
  sq::CsvWriter csv(out.stream(),
                    {"mixture", "tau", "bitwidth", "levels", "samples", "seed",
                     "quadrature", "monte_carlo", "std_error", "z_score"});
  for (int bits : a.bits) {
    const std::size_t levels = 2 * ((std::size_t{1} << (bits - 1)) - 1);
    const double exact = sq::expected_sr_variance(mix, a.tau, levels);
    const sq::MonteCarloEstimate mc =
        sq::monte_carlo_sr_variance(mix, a.tau, levels, a.samples, a.seed);
    const double z =
        mc.std_error > 0.0 ? (mc.mean - exact) / mc.std_error : 0.0;
    csv.row({a.mixture, sq::format_double(a.tau), sq::format_int(bits),
             sq::format_uint(levels), sq::format_uint(a.samples),
             sq::format_uint(a.seed), sq::format_double(exact),
             sq::format_double(mc.mean), sq::format_double(mc.std_error),
             sq::format_double(z)});
  }
  return 0;
}

struct ProbeArgs {
  std::size_t count = 100, size = 256;
  double gamma = 1.0;
  int bits = 8;
  std::uint64_t seed = 0;
  std::string out = "-";
};

int run_lipschitz(const ProbeArgs& a) {
  const auto probes = sq::lipschitz_study(a.count, a.size, a.gamma, a.seed);
  Output out(a.out);
  sq::CsvWriter csv(out.stream(),
                    {"probe", "seed", "size", "gamma", "sigma_l1", "sigma_l2",
                     "ratio", "bound", "ratio_le_bound"});
  std::size_t above = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const sq::LipschitzProbe& p = probes[i];
    above += p.ratio > p.bound;
    csv.row({sq::format_uint(i), sq::format_uint(a.seed),
             sq::format_uint(a.size), sq::format_double(a.gamma),
             sq::format_double(p.sigma_l1), sq::format_double(p.sigma_l2),
             sq::format_double(p.ratio), sq::format_double(p.bound),
             b(p.ratio <= p.bound)});
  }
  std::cerr << above << "/" << probes.size()
            << " probes have a gradient ratio above the bound\n";
  return above == 0 ? 0 : kCorrectnessExit;
}

int run_sigma_gap(const ProbeArgs& a) {
  const auto gaps = sq::sigma_gap_study(a.count, a.size, a.bits, a.seed);
  Output out(a.out);
  sq::CsvWriter csv(out.stream(),
                    {"batch", "seed", "size", "stats_bits", "sigma_l1",
                     "sigma_l2", "gap_l1", "gap_l2"});
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const sq::SigmaGap& g = gaps[i];
    l1 += g.gap_l1;
    l2 += g.gap_l2;
    csv.row({sq::format_uint(i), sq::format_uint(a.seed),
             sq::format_uint(a.size), sq::format_int(a.bits),
             sq::format_double(g.sigma_l1), sq::format_double(g.sigma_l2),
             sq::format_double(g.gap_l1), sq::format_double(g.gap_l2)});
  }
  if (!gaps.empty()) {
    const double n = static_cast<double>(gaps.size());
    std::cerr << "mean gap L1 " << l1 / n << ", L2 " << l2 / n << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ShiftQuant quantization, integer matmul and training tools"};
  app.require_subcommand(1);
  int code = 0;

  QuantizeArgs qa;
  auto* quant = app.add_subcommand("quantize", "Quantize an SQT1 tensor");
  quant->add_option("input", qa.input, "Input tensor (.sqt)")->required();
  quant->add_option("-o,--output", qa.output, "Output tensor (.sqt + .meta)")
      ->required();
  quant->add_option("--bits", qa.bits, "Bitwidth")->check(CLI::Range(2, 8));
  quant->add_option("--groups", qa.groups, "ShiftQuant group count")
      ->check(CLI::Range(1, 63));
  quant->add_option("--axis", qa.axis, "Channel axis");
  quant->add_option("--seed", qa.seed, "Rounding seed");
  quant->add_option("--stream", qa.stream, "Rounding stream");
  quant->add_option("--mode", qa.mode, "Granularity")
      ->check(CLI::IsMember({"shiftquant", "per-tensor", "per-channel"}));
  quant->add_option("--rounding", qa.rounding, "Rounding")
      ->check(CLI::IsMember({"stochastic", "nearest"}));
  quant->callback([&] { code = run_quantize(qa); });

  std::string dq_in, dq_out, dq_dtype = "f64";
  auto* deq = app.add_subcommand("dequantize", "Dequantize a quantized tensor");
  deq->add_option("input", dq_in, "Quantized tensor (.sqt with .meta)")
      ->required();
  deq->add_option("-o,--output", dq_out, "Output tensor (.sqt)")->required();
  deq->add_option("--dtype", dq_dtype, "Output dtype")
      ->check(CLI::IsMember({"f32", "f64"}));
  deq->callback([&] { code = run_dequantize(dq_in, dq_out, dq_dtype); });

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Time the matmul backends");
  bench->add_option("--sizes", ba.sizes, "MxKxN list")->delimiter(',');
  bench->add_option("--backends", ba.backends, "Backend list")
      ->delimiter(',')
      ->check(CLI::IsMember(
          {"shiftmm", "grouped_gemm", "per_tensor_int", "float_ref"}));
  bench->add_option("--bits", ba.bits, "Bitwidth")->check(CLI::Range(2, 8));
  bench->add_option("--groups", ba.groups, "ShiftQuant group count")
      ->check(CLI::Range(1, 63));
  bench->add_option("--repeats", ba.repeats, "Timed repetitions (>= 10)")
      ->check(CLI::Range(std::size_t{sq::kMinRepeats},
                         std::size_t{1} << 20));
  bench->add_option("--seed", ba.seed, "Operand seed");
  bench->add_option("--out", ba.out, "CSV path, - for stdout");
  bench->callback([&] { code = run_bench(ba); });

  std::string config, run_dir;
  auto* trn = app.add_subcommand("train", "Train an MLP from a config file");
  trn->add_option("config", config, "key = value config file")->required();
  trn->add_option("--out", run_dir, "Run directory")->required();
  trn->callback([&] { code = run_train(config, run_dir); });

  auto* analyze = app.add_subcommand("analyze", "Numerical studies");
  analyze->require_subcommand(1);

  BoundArgs bo;
  auto* vb = analyze->add_subcommand("variance-bound",
                                     "ShiftQuant variance bound sweep");
  vb->add_option("--families", bo.families, "Profile families")
      ->delimiter(',')
      ->check(CLI::IsMember({"equal", "log-uniform", "worst-in-group",
                             "one-per-slot", "group-equal"}));
  vb->add_option("--targets", bo.targets, "Group counts profiles target")
      ->delimiter(',');
  vb->add_option("--per-target", bo.per_target, "Profiles per family/target");
  vb->add_option("--channels", bo.channels, "Channels per profile");
  vb->add_option("--groups", bo.groups, "Group counts evaluated")
      ->delimiter(',');
  vb->add_option("--bits", bo.bits, "Bitwidths")->delimiter(',');
  vb->add_option("--samples", bo.samples, "Laplace samples per channel");
  vb->add_option("--seed", bo.seed, "Seed");
  vb->add_option("--out", bo.out, "CSV path, - for stdout");
  vb->callback([&] { code = run_variance_bound(bo); });

  EquivalenceArgs eq;
  auto* eqc = analyze->add_subcommand(
      "equivalence", "Grouping objective vs variance argmin agreement");
  eqc->add_option("--instances", eq.instances, "Instances");
  eqc->add_option("--channels", eq.channels, "Channels per instance")
      ->check(CLI::Range(std::size_t{1}, sq::kEquivalenceChannelLimit));
  eqc->add_option("--groups", eq.groups, "Group count");
  eqc->add_option("--bits", eq.bits, "Bitwidth")->check(CLI::Range(2, 8));
  eqc->add_option("--samples", eq.samples, "Laplace samples per channel");
  eqc->add_option("--decades", eq.decades, "Range spread in decades");
  eqc->add_option("--seed", eq.seed, "Seed");
  eqc->add_option("--out", eq.out, "CSV path, - for stdout");
  eqc->callback([&] { code = run_equivalence(eq); });

  LaplaceArgs la;
  auto* lap = analyze->add_subcommand(
      "laplace", "Expected rounding variance under a Laplace mixture");
  lap->add_option("--mixture", la.mixture,
                  "weight:location:scale components separated by ';'");
  lap->add_option("--tau", la.tau, "Quantization range width");
  lap->add_option("--bits", la.bits, "Bitwidths")
      ->delimiter(',')
      ->check(CLI::Range(2, 8));
  lap->add_option("--samples", la.samples, "Monte Carlo samples");
  lap->add_option("--seed", la.seed, "Seed");
  lap->add_option("--out", la.out, "CSV path, - for stdout");
  lap->callback([&] { code = run_laplace(la); });

  ProbeArgs lp;
  auto* lip = analyze->add_subcommand(
      "lipschitz", "L1 vs L2 normalization gradient norm probes");
  lip->add_option("--probes", lp.count, "Probe count");
  lip->add_option("--size", lp.size, "Values per probe");
  lip->add_option("--gamma", lp.gamma, "Scale parameter");
  lip->add_option("--seed", lp.seed, "Seed");
  lip->add_option("--out", lp.out, "CSV path, - for stdout");
  lip->callback([&] { code = run_lipschitz(lp); });

  ProbeArgs sg;
  sg.count = 1000;
  auto* sig = analyze->add_subcommand(
      "sigma-gap", "Quantization gap of 1/sigma under L1 and L2");
  sig->add_option("--batches", sg.count, "Batch count");
  sig->add_option("--size", sg.size, "Values per batch");
  sig->add_option("--bits", sg.bits, "Statistics bitwidth")
      ->check(CLI::Range(4, 16));
  sig->add_option("--seed", sg.seed, "Seed");
  sig->add_option("--out", sg.out, "CSV path, - for stdout");
  sig->callback([&] { code = run_sigma_gap(sg); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int exit = app.exit(e);
    return exit == 0 ? 0 : kUsageExit;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.message << '\n';
    return kUsageExit;
  } catch (const sq::CorrectnessError& e) {
    std::cerr << "correctness check failed: " << e.what() << '\n';
    return kCorrectnessExit;
  } catch (const sq::TrainingDivergedError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kDivergedExit;
  } catch (const sq::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kErrorExit;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kErrorExit;
  }
  return code;
}
