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

#include <cstddef>
#include <span>
#include <vector>

#include "divattn/autodiff.hpp"
#include "divattn/tensor.hpp"

namespace divattn {

/// Coefficients of L = L_xent + beta_tr L_triplet + beta_of L_OF + beta_ow L_OW.
struct LossWeights {
  double beta_tr = 1e-1;
  double beta_of = 1e-6;
  double beta_ow = 1e-3;
  double margin_alpha = 1.2;

  void validate() const;
};

/// Embeddings of P identities x K instances each.
struct Batch {
  Tensor embeddings;  // batch x dim
  std::vector<int> labels;

  /// Checks the P x K composition (P >= 2, K >= 2, every identity exactly K
  /// times) and returns {P, K}.
  std::pair<std::size_t, std::size_t> composition() const;
};

/// Squared-distance floor inside the triplet distance square root.
inline constexpr double kDistanceFloor = 1e-12;

double cross_entropy(const Tensor& logits, std::span<const int> labels);
ad::Var cross_entropy(ad::Var logits, std::span<const int> labels);

/// Batch-hard triplet loss: per anchor, the farthest same-identity and the
/// nearest other-identity embedding, hinge at `alpha`, mean over anchors.
double batch_hard_triplet(const Batch& batch, double alpha);
ad::Var batch_hard_triplet(ad::Var embeddings, std::span<const int> labels, double alpha);

double total_loss(double xent, double triplet, double of_pen, double ow_pen,
                  const LossWeights& w);
ad::Var total_loss(ad::Var xent, ad::Var triplet, ad::Var of_pen, ad::Var ow_pen,
                   const LossWeights& w);

}  // namespace divattn
