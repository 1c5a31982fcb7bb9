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


// Acceptance runner. Prints one PASS/FAIL line per selected criterion and
// exits non-zero when any of them fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "divattn/checks.hpp"
#include "divattn/cli.hpp"
#include "divattn/config.hpp"
#include "divattn/evaluate.hpp"
#include "divattn/train.hpp"

namespace divattn::acceptance {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Options {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string config_path;
  std::string work_dir;
};

RunConfig base_config(const Options& opt) {
  return opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

Outcome suite_outcome(const std::vector<CheckResult>& results, double secs, double budget) {
  Outcome o{true, {}};
  std::ostringstream d;
  for (const CheckResult& r : results) {
    if (!r.passed) {
      o.passed = false;
      d << "failed " << r.suite << '/' << r.name << " error " << r.max_error << " > "
        << r.tolerance << "; ";
    }
  }
  if (budget > 0.0 && secs >= budget) {
    o.passed = false;
    d << "runtime " << fmt(secs) << " s exceeds " << budget << " s; ";
  }
  double worst = 0.0;
  for (const CheckResult& r : results) {
    if (r.tolerance > 0.0) worst = std::max(worst, r.max_error / r.tolerance);
  }
  d << results.size() << " checks, worst error/tolerance " << fmt(worst) << ", " << fmt(secs, 3)
    << " s";
  o.detail = d.str();
  return o;
}

Outcome run_suite(const std::function<std::vector<CheckResult>(const CheckOptions&)>& suite,
                  double budget) {
  const auto t0 = Clock::now();
  const auto results = suite(CheckOptions{});
  return suite_outcome(results, seconds_since(t0), budget);
}

// Trained-variant statistics shared by the de-correlation and ablation criteria.
struct Cell {
  double map = 0.0;
  double corr_final = 0.0;
  double corr_ta = 0.0;
  double seconds = 0.0;
};

double mean_offdiag(const std::vector<Tensor>& maps) {
  double total = 0.0;
  for (const Tensor& m : maps) total += correlation_report(m).mean_offdiag;
  return total / static_cast<double>(maps.size());
}

class Grid {
 public:
  explicit Grid(const Options& opt) : opt_(opt), config_(base_config(opt)) {}

  const Cell& cell(const std::string& variant, std::uint64_t seed) {
    const auto key = std::make_pair(variant, seed);
    if (auto it = cells_.find(key); it != cells_.end()) return it->second;
    ToyDatasetConfig dc = config_.dataset;
    dc.image = config_.network.input;
    const ToyDataset ds = make_toy_dataset(dc, dataset_seed(seed));
    const VariantSpec v = VariantSpec::parse(variant);
    const auto t0 = Clock::now();
    TrainResult r = train(ds, config_, v, seed);
    Cell c;
    c.seconds = seconds_since(t0);
    c.map = r.final_metrics.map;
    std::vector<std::size_t> test = ds.query;
    test.insert(test.end(), ds.gallery.begin(), ds.gallery.end());
    c.corr_final = mean_offdiag(site_values(r.network, ds, test, v, "attentive_final"));
    c.corr_ta = mean_offdiag(site_values(r.network, ds, test, v, "t_a"));
    std::cerr << "  trained " << variant << " seed " << seed << ": mAP " << fmt(c.map)
              << " corr " << fmt(c.corr_final) << " (" << fmt(c.seconds, 3) << " s)\n";
    return cells_.emplace(key, c).first->second;
  }

  Cell mean(const std::string& variant) {
    Cell m;
    for (auto s : opt_.seeds) {
      const Cell& c = cell(variant, s);
      m.map += c.map;
      m.corr_final += c.corr_final;
      m.corr_ta += c.corr_ta;
      m.seconds = std::max(m.seconds, c.seconds);
    }
    const double n = static_cast<double>(opt_.seeds.size());
    m.map /= n;
    m.corr_final /= n;
    m.corr_ta /= n;
    return m;
  }

 private:
  Options opt_;
  RunConfig config_;
  std::map<std::pair<std::string, std::uint64_t>, Cell> cells_;
};

constexpr double kRunBudgetSeconds = 300.0;

Outcome decorrelation(Grid& grid) {
  const Cell att = grid.mean("pam,cam");
  const Cell both = grid.mean("pam,cam,of,ow");
  const double slowest = std::max(att.seconds, both.seconds);
  Outcome o;
  o.passed = att.corr_final > both.corr_final && slowest < kRunBudgetSeconds;
  o.detail = "mean |corr| attention-only " + fmt(att.corr_final) + " vs attention+O.F.+O.W. " +
             fmt(both.corr_final) + " (reduced map before pooling; T_a " + fmt(att.corr_ta) +
             " vs " + fmt(both.corr_ta) + "), slowest run " + fmt(slowest, 3) + " s";
  return o;
}

Outcome ablation_order(Grid& grid) {
  const double full = grid.mean("full").map;
  const double att = grid.mean("pam,cam").map;
  const double orth = grid.mean("of,ow").map;
  const double base = grid.mean("baseline").map;
  constexpr double kTie = 0.005, kMargin = 0.01;
  const bool full_ok = full >= std::max(att, orth) - kTie;
  const bool base_ok = base <= std::min({full, att, orth}) - kMargin;
  Outcome o;
  o.passed = full_ok && base_ok;
  o.detail = "mean mAP full " + fmt(full) + ", attention-only " + fmt(att) +
             ", orthogonality-only " + fmt(orth) + ", baseline " + fmt(base);
  if (!full_ok) o.detail += "; full trails the best single family by more than 0.5 points";
  if (!base_ok) o.detail += "; baseline is not lowest by 1 point";
  return o;
}

Outcome schedule_contract(const Options& opt) {
  RunConfig config = base_config(opt);
  config.schedule.batches_per_epoch = 2;
  const TrainSchedule& s = config.schedule;
  ToyDatasetConfig dc = config.dataset;
  dc.image = config.network.input;
  const std::uint64_t seed = opt.seeds.front();
  const ToyDataset ds = make_toy_dataset(dc, dataset_seed(seed));
  const VariantSpec v = VariantSpec::parse("full");

  std::optional<Network> after_stage1;
  std::vector<EpochLog> logs;
  const TrainResult r = train(ds, config, v, seed, [&](const EpochLog& e, const Network& net) {
    logs.push_back(e);
    if (e.epoch + 1 == s.stage1_epochs) after_stage1 = net;
  });
  const Network initial(config.network, ds.num_train_ids(), derive_seed(seed, "init"));

  std::ostringstream d;
  bool ok = after_stage1.has_value();
  std::size_t frozen = 0, moved_later = 0, head_moved = 0;
  for (std::size_t i = 0; ok && i < initial.parameters().size(); ++i) {
    const Parameter& p0 = initial.parameters()[i];
    if (p0.group == ParamGroup::kBackbone) {
      if (after_stage1->parameters()[i].value == p0.value) {
        ++frozen;
      } else {
        ok = false;
        d << p0.name << " changed in stage 1; ";
      }
      if (r.network.parameters()[i].value != p0.value) ++moved_later;
    } else if (after_stage1->parameters()[i].value != p0.value) {
      ++head_moved;
    }
  }
  ok = ok && head_moved > 0 && moved_later == frozen;

  std::set<double> stage2_rates;
  for (const EpochLog& e : logs) {
    double want = s.base_lr;
    if (e.stage == 2) {
      for (int m : s.milestones) {
        if (e.epoch - s.stage1_epochs >= m) want *= s.lr_decay;
      }
      stage2_rates.insert(e.lr);
    }
    if (e.lr != want) {
      ok = false;
      d << "epoch " << e.epoch << " lr " << e.lr << " expected " << want << "; ";
    }
  }
  const bool expected_rates = stage2_rates.size() == 3 &&
                           std::abs(*stage2_rates.begin() - 3e-6) <= 1e-18 &&
                           std::abs(*std::next(stage2_rates.begin()) - 3e-5) <= 1e-17 &&
                           *stage2_rates.rbegin() == 3e-4;
  ok = ok && expected_rates;
  d << frozen << " backbone tensors unchanged through stage 1 and updated in stage 2, stage-2 rates {";
  for (double lr : stage2_rates) d << lr << (lr == *stage2_rates.rbegin() ? "" : ", ");
  d << "}";
  return {ok, d.str()};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(const Options& opt) {
  const fs::path root = opt.work_dir.empty()
                            ? fs::temp_directory_path() / ("divattn_accept_" + std::to_string(::getpid()))
                            : fs::path(opt.work_dir);
  fs::remove_all(root);
  fs::create_directories(root);
  RunConfig config = base_config(opt);
  config.schedule.batches_per_epoch = 3;
  const fs::path cfg = root / "run.cfg";
  std::ofstream(cfg) << to_config_text(config);
  std::ostringstream log;
  cli::TrainCommand a{cfg.string(), opt.seeds.front(), (root / "a").string(), "full", true};
  cli::TrainCommand b = a;
  b.out = (root / "b").string();
  const int ra = cli::cmd_train(a, log), rb = cli::cmd_train(b, log);
  const std::string ma = read_bytes(root / "a" / "metrics.csv");
  const std::string mb = read_bytes(root / "b" / "metrics.csv");
  Outcome o;
  o.passed = ra == 0 && rb == 0 && !ma.empty() && ma == mb;
  o.detail = "metrics.csv " + std::to_string(ma.size()) + " bytes, " +
             (ma == mb ? "identical" : "different") + " across two runs";
  if (opt.work_dir.empty()) fs::remove_all(root);
  return o;
}

const std::map<int, std::string>& criterion_names() {
  static const std::map<int, std::string> names{
      {1, "eigen-oracle equivalence"},  {2, "gradient fidelity"},
      {3, "attention invariants"},      {4, "loss oracle equivalence"},
      {5, "metric oracle equivalence"}, {6, "directional de-correlation"},
      {7, "ablation ordering"},         {8, "schedule contract"},
      {9, "determinism"},
  };
  return names;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"divattn acceptance runner"};
  std::vector<int> selected;
  Options opt;
  app.add_option("--criterion", selected, "Criteria to run (default: all)")
      ->delimiter(',')
      ->check(CLI::Range(1, 9));
  app.add_option("--seeds", opt.seeds, "Seeds for the trained criteria")->delimiter(',');
  app.add_option("--config", opt.config_path, "Configuration file for trained criteria");
  app.add_option("--work-dir", opt.work_dir, "Keep determinism run outputs here");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) {
    for (const auto& [id, _] : criterion_names()) selected.push_back(id);
  }
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());

  Grid grid(opt);
  bool all = true;
  for (int id : selected) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      switch (id) {
        case 1: o = run_suite(eigen_checks, 10.0); break;
        case 2: o = run_suite(gradient_checks, 60.0); break;
        case 3: o = run_suite(attention_checks, 0.0); break;
        case 4: o = run_suite(loss_checks, 0.0); break;
        case 5: o = run_suite(metric_checks, 0.0); break;
        case 6: o = decorrelation(grid); break;
        case 7: o = ablation_order(grid); break;
        case 8: o = schedule_contract(opt); break;
        case 9: o = determinism(opt); break;
      }
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.passed;
    std::cout << "criterion " << id << " " << criterion_names().at(id) << ": "
              << (o.passed ? "PASS" : "FAIL") << " | " << o.detail << " | "
              << fmt(seconds_since(t0), 3) << " s" << std::endl;
  }
  return all ? 0 : 1;
}

}  // namespace divattn::acceptance

int main(int argc, char** argv) { return divattn::acceptance::run(argc, argv); }
