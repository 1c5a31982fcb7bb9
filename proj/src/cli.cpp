// Copyright 2026 The divattn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "divattn/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>

#include <CLI11.hpp>

#include "divattn/checkpoint.hpp"
#include "divattn/checks.hpp"
#include "divattn/config.hpp"
#include "divattn/dataset.hpp"
#include "divattn/errors.hpp"
#include "divattn/evaluate.hpp"
#include "divattn/orthogonality.hpp"
#include "divattn/train.hpp"

namespace divattn::cli {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"baseline", "pam",   "cam",           "pam,cam",
                                          "of",       "ow",    "of,ow",         "pam,cam,of,ow",
                                          "full"};
  return v;
}

namespace {

RunConfig config_from(const std::string& path) {
  return path.empty() ? parse_config("") : load_config(path);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw ContractError("cannot write " + p.string());
  return out;
}

ToyDataset dataset_for(const RunConfig& config, std::uint64_t seed) {
  ToyDatasetConfig d = config.dataset;
  d.image = config.network.input;
  return make_toy_dataset(d, dataset_seed(seed));
}

void write_epoch_log(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,stage,lr,loss,xent,triplet,of,ow,train_top1\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.stage << ',' << format_double(e.lr) << ',' << format_double(e.loss)
        << ',' << format_double(e.xent) << ',' << format_double(e.triplet) << ','
        << format_double(e.of) << ',' << format_double(e.ow) << ','
        << format_double(e.train_top1) << '\n';
  }
}

void write_metric_row(std::ostream& out, const std::string& lead, const RetrievalMetrics& m) {
  out << lead << ',' << format_double(m.top1) << ',' << format_double(m.top5) << ','
      << format_double(m.map) << '\n';
}

}  // namespace

int cmd_train(const TrainCommand& cmd, std::ostream& log) {
  const RunConfig config = config_from(cmd.config_path);
  const VariantSpec variant = VariantSpec::parse(cmd.variant);
  const fs::path out(cmd.out);
  if (fs::exists(out / "run.txt") && !cmd.force) {
    throw ConfigError("--out", out.string() + " already holds a run; pass --force to overwrite");
  }
  fs::create_directories(out);
  const ToyDataset ds = dataset_for(config, cmd.seed);
  log << "train variant=" << variant.to_string() << " seed=" << cmd.seed << '\n';
  const TrainResult result = train(ds, config, variant, cmd.seed, [&](const EpochLog& e, const Network&) {
    log << "epoch " << e.epoch << " stage " << e.stage << " lr " << e.lr << " loss " << e.loss
        << " train_top1 " << e.train_top1 << '\n';
  });

  const RunManifest manifest = make_manifest(cmd.config_path, config, variant, cmd.seed, out.string());
  save_checkpoint(out, result.network, config, variant, manifest);
  {
    auto f = open_out(out / "epoch_log.csv");
    write_epoch_log(f, result.log);
  }
  {
    auto f = open_out(out / "metrics.csv");
    f << "run_id,stage,top1,top5,mAP\n";
    if (result.stage1) write_metric_row(f, manifest.run_id + ",stage1", *result.stage1);
    write_metric_row(f, manifest.run_id + ",final", result.final_metrics);
  }
  log << "final top1 " << result.final_metrics.top1 << " top5 " << result.final_metrics.top5
      << " mAP " << result.final_metrics.map << '\n';
  return kExitOk;
}

int cmd_ablate(const AblateCommand& cmd, std::ostream& log) {
  const RunConfig config = config_from(cmd.config_path);
  const std::vector<std::string>& names = cmd.variants.empty() ? ablation_variants() : cmd.variants;
  std::vector<VariantSpec> variants;
  for (const auto& n : names) variants.push_back(VariantSpec::parse(n));
  if (cmd.seeds.empty()) throw ConfigError("--seeds", "at least one seed is required");
  fs::create_directories(cmd.out);
  auto csv = open_out(fs::path(cmd.out) / "ablation.csv");
  csv << "variant,seed,top1,top5,mAP\n";
  for (const auto& v : variants) {
    RetrievalMetrics mean;
    for (auto seed : cmd.seeds) {
      const ToyDataset ds = dataset_for(config, seed);
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult r = train(ds, config, v, seed);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log << v.to_string() << " seed " << seed << " mAP " << r.final_metrics.map << " ("
          << secs << " s)\n";
      write_metric_row(csv, '"' + v.to_string() + "\"," + std::to_string(seed), r.final_metrics);
      mean.top1 += r.final_metrics.top1;
      mean.top5 += r.final_metrics.top5;
      mean.map += r.final_metrics.map;
    }
    const double n = static_cast<double>(cmd.seeds.size());
    mean.top1 /= n;
    mean.top5 /= n;
    mean.map /= n;
    write_metric_row(csv, '"' + v.to_string() + "\",mean", mean);
  }
  return kExitOk;
}

namespace {

struct SiteStats {
  double offdiag = 0.0;
  double full = 0.0;
  std::size_t constant = 0;
  std::size_t samples = 0;
  std::vector<std::size_t> histogram = std::vector<std::size_t>(kCorrelationBins, 0);
  std::vector<double> conditions;

  void add(const Tensor& map) {
    const CorrelationReport r = correlation_report(map);
    offdiag += r.mean_offdiag;
    full += r.mean_full;
    constant += r.constant_channels;
    for (std::size_t b = 0; b < kCorrelationBins; ++b) histogram[b] += r.histogram[b];
    conditions.push_back(condition_number(flatten_spatial(map)));
    ++samples;
  }
};

}  // namespace

int cmd_diagnose(const DiagnoseCommand& cmd, std::ostream& log) {
  LoadedCheckpoint ck = load_checkpoint(cmd.checkpoint);
  const ToyDataset ds = dataset_for(ck.config, ck.manifest.seed);
  std::vector<std::size_t> test = ds.query;
  test.insert(test.end(), ds.gallery.begin(), ds.gallery.end());

  std::map<std::string, SiteStats> stats;
  for (const std::string site : {"t_a", "attentive_final"}) {
    for (const Tensor& map : site_values(ck.network, ds, test, ck.variant, site)) {
      stats[site].add(map);
    }
  }
  // T_g is a vector per image; its channels are correlated across the test images.
  const Tensor tg = transpose(stack(site_values(ck.network, ds, test, ck.variant, "t_g")));
  stats["t_g"].add(tg.reshaped({tg.dim(0), 1, tg.dim(1)}));

  const fs::path out(cmd.out);
  fs::create_directories(out);
  auto corr = open_out(out / "correlation.csv");
  auto hist = open_out(out / "corr_hist.csv");
  auto cond = open_out(out / "condition.csv");
  corr << "variant,site,mean_offdiag,mean_full,constant_channels,samples\n";
  hist << "site,bin_lo,bin_hi,count\n";
  cond << "site,matrices,median_condition,max_condition,infinite\n";
  for (const std::string site : {"t_a", "t_g", "attentive_final"}) {
    SiteStats& s = stats[site];
    const double n = static_cast<double>(s.samples);
    corr << '"' << ck.variant.to_string() << "\"," << site << ',' << format_double(s.offdiag / n)
         << ',' << format_double(s.full / n) << ',' << s.constant << ',' << s.samples << '\n';
    for (std::size_t b = 0; b < kCorrelationBins; ++b) {
      const double w = 1.0 / static_cast<double>(kCorrelationBins);
      hist << site << ',' << format_double(static_cast<double>(b) * w) << ','
           << format_double(static_cast<double>(b + 1) * w) << ',' << s.histogram[b] << '\n';
    }
    std::vector<double> c = s.conditions;
    std::sort(c.begin(), c.end());
    const auto infinite = static_cast<std::size_t>(
        std::count_if(c.begin(), c.end(), [](double x) { return std::isinf(x); }));
    cond << site << ',' << c.size() << ',' << format_double(c[c.size() / 2]) << ','
         << format_double(c.back()) << ',' << infinite << '\n';
    log << site << " mean_offdiag " << s.offdiag / n << '\n';
  }
  return kExitOk;
}

int cmd_check(const CheckCommand& cmd, std::ostream& log) {
  CheckOptions opt;
  opt.tolerance_scale = cmd.tolerance_scale;
  opt.seed = cmd.seed;
  const auto results = all_checks(opt);
  if (!cmd.out.empty()) {
    fs::create_directories(cmd.out);
    auto f = open_out(fs::path(cmd.out) / "check_report.csv");
    write_check_report(f, results);
  }
  write_check_report(log, results);
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (!r.passed) {
      ++failed;
      std::cerr << "FAILED " << r.suite << '/' << r.name << " error " << r.max_error
                << " tolerance " << r.tolerance << '\n';
    }
  }
  log << results.size() - failed << '/' << results.size() << " checks passed\n";
  return failed ? kExitFailure : kExitOk;
}

int cmd_bench_power_iteration(const BenchCommand& cmd, std::ostream& log) {
  fs::create_directories(cmd.out);
  auto csv = open_out(fs::path(cmd.out) / "bench_power_iteration.csv");
  csv << "rows,cols,gap,ratio_top,ratio_shifted,iterations,rel_err_max,rel_err_min,estimate_us,"
         "oracle_us\n";
  using clock = std::chrono::steady_clock;
  auto micros = [](clock::duration d) { return std::chrono::duration<double, std::micro>(d).count(); };
  for (auto n : cmd.sizes) {
    for (double gap : cmd.gaps) {
      Rng rng(derive_seed(cmd.seed, "bench", n * 1000 + static_cast<std::size_t>(gap * 100)));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> lam(n);
      lam[0] = 10.0;
      for (std::size_t i = 1; i < n; ++i) lam[i] = 1.0 + (10.0 / gap - 1.0) * u(rng);
      if (n > 1) lam[n - 1] = 0.5;
      const Tensor f = matrix_with_spectrum(lam, 2 * n, rng);

      const auto t0 = clock::now();
      std::vector<double> exact = symmetric_eigenvalues(gram(f));
      const double oracle_us = micros(clock::now() - t0);
      std::sort(exact.begin(), exact.end(), std::greater<>());
      const double top = exact[0] / exact[1];
      const double shifted = n > 2 ? (exact[0] - exact[n - 1]) / (exact[0] - exact[n - 2]) : 0.0;
      for (int it : cmd.iterations) {
        SvdoConfig cfg;
        cfg.iterations = it;
        cfg.seed = derive_seed(cmd.seed, "bench-q", n);
        const auto t1 = clock::now();
        const SvdoEstimate est = svdo_estimate(f, cfg);
        const double est_us = micros(clock::now() - t1);
        csv << n << ',' << 2 * n << ',' << format_double(gap) << ',' << format_double(top) << ','
            << format_double(shifted) << ',' << it << ','
            << format_double(std::abs(est.lambda_max - exact[0]) / exact[0]) << ','
            << format_double(std::abs(est.lambda_min - exact[n - 1]) / exact[n - 1]) << ','
            << format_double(est_us) << ',' << format_double(oracle_us) << '\n';
      }
    }
    log << "size " << n << " done\n";
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Attentive and diverse feature learning on a toy re-identification task"};
  app.require_subcommand(1);

  TrainCommand train_cmd;
  auto* train = app.add_subcommand("train", "Train one variant and write its checkpoint");
  train->add_option("--config", train_cmd.config_path, "Configuration file (key = value)");
  train->add_option("--seed", train_cmd.seed, "Master seed");
  train->add_option("--out", train_cmd.out, "Output directory")->required();
  train->add_option("--variant", train_cmd.variant,
                    "Enabled components: comma list of pam,cam,of,ow,triplet, or baseline/full");
  train->add_flag("--force", train_cmd.force, "Overwrite an existing run directory");

  AblateCommand ablate_cmd;
  auto* ablate = app.add_subcommand("ablate", "Train the ablation grid over several seeds");
  ablate->add_option("--config", ablate_cmd.config_path, "Configuration file");
  ablate->add_option("--seeds", ablate_cmd.seeds, "Seeds")->delimiter(',');
  ablate->add_option("--out", ablate_cmd.out, "Output directory")->required();
  ablate->add_option("--variant", ablate_cmd.variants, "Restrict to these variants (repeatable)");

  DiagnoseCommand diag_cmd;
  auto* diagnose = app.add_subcommand("diagnose", "Channel correlation and conditioning report");
  diagnose->add_option("--checkpoint", diag_cmd.checkpoint, "Checkpoint directory")->required();
  diagnose->add_option("--out", diag_cmd.out, "Output directory")->required();

  CheckCommand check_cmd;
  auto* check = app.add_subcommand("check", "Run gradient checks and oracle comparisons");
  check->add_option("--out", check_cmd.out, "Directory for check_report.csv");
  check->add_option("--tolerance-scale", check_cmd.tolerance_scale, "Multiply every tolerance");
  check->add_option("--seed", check_cmd.seed, "Seed for random inputs");

  BenchCommand bench_cmd;
  auto* bench = app.add_subcommand("bench-power-iteration",
                                   "Accuracy and cost of power iteration versus Jacobi");
  bench->add_option("--out", bench_cmd.out, "Output directory")->required();
  bench->add_option("--seed", bench_cmd.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_cmd, std::cout);
    if (*ablate) return cmd_ablate(ablate_cmd, std::cout);
    if (*diagnose) return cmd_diagnose(diag_cmd, std::cout);
    if (*check) return cmd_check(check_cmd, std::cout);
    if (*bench) return cmd_bench_power_iteration(bench_cmd, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.key() << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace divattn::cli
