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


#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace divattn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct TrainCommand {
  std::string config_path;  // empty: built-in defaults
  std::uint64_t seed = 1;
  std::string out;
  std::string variant = "full";
  bool force = false;
};

struct AblateCommand {
  std::string config_path;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out;
  /// Empty: the nine ablation variants.
  std::vector<std::string> variants;
};

struct DiagnoseCommand {
  std::string checkpoint;
  std::string out;
};

struct CheckCommand {
  std::string out;  // empty: report on stdout only
  double tolerance_scale = 1.0;
  std::uint64_t seed = 20190507;
};

struct BenchCommand {
  std::string out;
  std::uint64_t seed = 1;
  std::vector<std::size_t> sizes{8, 16, 32, 64, 128};
  std::vector<double> gaps{1.2, 1.5, 3.0};
  std::vector<int> iterations{1, 2, 5, 10, 20, 50};
};

/// Variant strings of the ablation grid: baseline, attention and
/// orthogonality subsets, both together without triplet loss, and full.
const std::vector<std::string>& ablation_variants();

int cmd_train(const TrainCommand& cmd, std::ostream& log);
int cmd_ablate(const AblateCommand& cmd, std::ostream& log);
int cmd_diagnose(const DiagnoseCommand& cmd, std::ostream& log);
int cmd_check(const CheckCommand& cmd, std::ostream& log);
int cmd_bench_power_iteration(const BenchCommand& cmd, std::ostream& log);

/// Parses argv, dispatches, and maps errors to exit codes.
int run(int argc, char** argv);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace divattn::cli
