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


// Channel and position attention.
//
// CAM: X = softmax_rows(F F^T) over the C x N flattening F of a map A, and
//   E = gamma * unflatten(X F) + A.
// PAM: projection heads produce B, C, D from A (conv -> batch norm -> relu);
//   S = softmax_rows(B^T C) is N x N with rows indexing query pixels, and
//   E = gamma * unflatten(D S^T) + A.

#pragma once

#include <cstddef>
#include <cstdint>

#include "divattn/autodiff.hpp"
#include "divattn/tensor.hpp"

namespace divattn {

enum class AffinityKind { kChannel, kPixel };

/// Square row-stochastic matrix.
struct AffinityMatrix {
  Tensor entries;
  AffinityKind kind = AffinityKind::kChannel;
};

struct CamParams {
  double gamma = 0.0;
};

struct ProjectionHead {
  Tensor weight;  // C x C x 1 x 1
  Tensor bn_gamma;
  Tensor bn_beta;
  Tensor running_mean;
  Tensor running_var;

  /// Head whose evaluation-mode output is relu(input) exactly.
  static ProjectionHead identity(std::size_t channels, double eps);
};

struct PamParams {
  double gamma = 0.0;
  double eps = 1e-5;
  ProjectionHead query;  // B
  ProjectionHead key;    // C
  ProjectionHead value;  // D
};

AffinityMatrix channel_affinity(const Tensor& a);
Tensor cam_forward(const Tensor& a, const CamParams& params);

AffinityMatrix pixel_affinity(const Tensor& b, const Tensor& c);

struct PamTrace {
  Tensor b, c, d;
  AffinityMatrix affinity;
};

/// Evaluation-mode PAM on one C x H x W map; `trace` receives the head
/// outputs and the affinity when non-null.
Tensor pam_forward(const Tensor& a, const PamParams& params, PamTrace* trace = nullptr);

/// Counts affinity matrices built on this thread and the worst row-sum error.
/// Debug builds also assert each row sums to 1 within 1e-8.
struct AffinityAudit {
  std::size_t matrices = 0;
  double worst_row_error = 0.0;

  static AffinityAudit& current();
  void reset() { *this = {}; }
};

namespace attention_ops {

/// C x N -> C x C channel affinity.
ad::Var channel_affinity(ad::Var flat);
/// B and C flattened to C x N -> N x N pixel affinity.
ad::Var pixel_affinity(ad::Var b_flat, ad::Var c_flat);

/// CAM on a single C x H x W map or an N x C x H x W batch (per sample).
ad::Var cam(ad::Var maps, ad::Var gamma);

struct HeadVars {
  ad::Var weight;
  ad::Var bn_gamma;
  ad::Var bn_beta;
  const ad::BatchNormStats* running = nullptr;
  ad::BatchNormStats* batch_stats = nullptr;
};

struct PamVars {
  ad::Var gamma;
  HeadVars query, key, value;
  double eps = 1e-5;
};

struct PamOutput {
  ad::Var out;
  ad::Var b, c, d;
};

/// PAM on an N x C x H x W batch. Training mode normalizes heads with batch
/// statistics and reports them through each head's batch_stats.
PamOutput pam(ad::Var maps, const PamVars& vars, bool training);

/// gamma * unflatten(D S^T) + A for one sample (A, D: C x H x W; S: N x N).
ad::Var pam_aggregate(ad::Var a, ad::Var d, ad::Var affinity, ad::Var gamma);

}  // namespace attention_ops

}  // namespace divattn
