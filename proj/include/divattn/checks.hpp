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


// Self-check suites: gradient checks of every differentiable op, eigenvalue
// estimates against the Jacobi solver, attention invariants, and loss and
// retrieval-metric oracles. Shared by `divattn check` and the acceptance
// runner.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "divattn/rng.hpp"
#include "divattn/tensor.hpp"

namespace divattn {

/// rows x cols matrix F (cols >= rows) whose Gram matrix F F^T has the given
/// eigenvalues, built from random orthonormal factors.
Tensor matrix_with_spectrum(const std::vector<double>& eigenvalues, std::size_t cols, Rng& rng);

struct CheckResult {
  std::string suite;
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct CheckOptions {
  /// Multiplies every tolerance.
  double tolerance_scale = 1.0;
  std::uint64_t seed = 20190507;
  /// Random inputs per differentiable op.
  int gradient_trials = 20;
};

std::vector<CheckResult> gradient_checks(const CheckOptions& options);
std::vector<CheckResult> eigen_checks(const CheckOptions& options);
std::vector<CheckResult> attention_checks(const CheckOptions& options);
std::vector<CheckResult> loss_checks(const CheckOptions& options);
std::vector<CheckResult> metric_checks(const CheckOptions& options);

std::vector<CheckResult> all_checks(const CheckOptions& options);

/// CSV with columns suite,check,max_error,tolerance,status,detail.
void write_check_report(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace divattn
