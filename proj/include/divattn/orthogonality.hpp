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


// Spectral value difference orthogonality (SVDO) regularizer.
//
// For a matrix F the penalty is beta * (lambda_max - lambda_min)^2 over the
// eigenvalues of F F^T. Both eigenvalues are estimated by a short, unrolled
// power iteration, so the penalty is differentiable on the tape and its
// gradient is exactly that of the estimate used in the forward pass:
//
//   p <- X q,  q <- X p,  lambda <- |q| / |p|
//
// with X = F F^T for lambda_max and X = F F^T - lambda_max I for the
// smallest eigenvalue. The shifted matrix is negative semidefinite, so the
// iteration returns |lambda_min - lambda_max| and lambda_min is recovered as
// lambda_max minus that estimate.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "divattn/autodiff.hpp"
#include "divattn/tensor.hpp"

namespace divattn {

enum class Reduction { kMean, kSum };

struct SvdoConfig {
  double beta = 1.0;
  int iterations = 2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PowerIterState {
  Tensor p;
  Tensor q;
  double lambda = 0.0;
  bool degenerate = false;
};

/// Unit-norm random start vector (n x 1) drawn from `seed`.
PowerIterState init_power_iter(std::size_t n, std::uint64_t seed);

/// F F^T.
Tensor gram(const Tensor& f);

/// Largest-magnitude eigenvalue estimate of the symmetric `x`, starting from
/// state.q. Leaves the final p, q and lambda in `state`. Returns 0 and sets
/// state.degenerate when |p| falls below 1e-12.
double power_iter_lambda(const Tensor& x, const SvdoConfig& cfg, PowerIterState& state);

namespace ad_ops {

using LinearMap = std::function<ad::Var(ad::Var)>;

struct LambdaVar {
  ad::Var value;
  bool degenerate = false;
};

/// Unrolled power iteration against an implicit symmetric operator.
LambdaVar power_iter_lambda(const LinearMap& apply, ad::Var q0, int iterations);

struct SvdoVars {
  ad::Var penalty;
  ad::Var lambda_max;
  ad::Var lambda_min;
  bool degenerate = false;
};

/// Penalty for a rows x cols matrix node. F F^T is applied as F (F^T q),
/// never formed.
SvdoVars svdo(ad::Var f, const SvdoConfig& cfg);

}  // namespace ad_ops

ad::Var svdo_penalty(ad::Var f, const SvdoConfig& cfg);

struct SvdoEstimate {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  double penalty = 0.0;
  bool degenerate = false;
};

SvdoEstimate svdo_estimate(const Tensor& f, const SvdoConfig& cfg);
double svdo_penalty(const Tensor& f, const SvdoConfig& cfg);

/// O.F.: flatten each C x H x W map to C x N and reduce the per-sample
/// penalties over the batch (mean by default). Accepts one map or N x C x H x W.
ad::Var of_penalty(ad::Var feature_maps, const SvdoConfig& cfg,
                   Reduction reduction = Reduction::kMean);
double of_penalty(const Tensor& feature_maps, const SvdoConfig& cfg,
                  Reduction reduction = Reduction::kMean);

/// A conv weight stored as M x C x k x k, viewed as the (k*k*C) x M matrix
/// whose columns are the flattened filters. Rows are ordered (c, ky, kx);
/// the row order does not change the eigenvalues of F F^T.
struct WeightMatrixView {
  Shape source_shape;
  Tensor matrix;
};

WeightMatrixView weight_matrix_view(const Tensor& conv_weight);
ad::Var weight_matrix_view(ad::Var conv_weight);

/// O.W.: reduce svdo_penalty over every registered weight view (sum by default).
ad::Var ow_penalty(std::span<const ad::Var> weight_views, const SvdoConfig& cfg,
                   Reduction reduction = Reduction::kSum);
double ow_penalty(std::span<const WeightMatrixView> weights, const SvdoConfig& cfg,
                  Reduction reduction = Reduction::kSum);

/// sigma_max / sigma_min of F from the exact eigenvalues of F F^T.
/// Returns +infinity when sigma_min < 1e-12. Diagnostic only.
double condition_number(const Tensor& f);

struct ExtremeEigs {
  double max = 0.0;
  double min = 0.0;
};

/// Cyclic Jacobi eigenvalues of a symmetric matrix (size <= 256), ascending.
std::vector<double> symmetric_eigenvalues(const Tensor& x);
ExtremeEigs exact_extreme_eigs(const Tensor& x);

}  // namespace divattn
