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


#include "divattn/losses.hpp"

#include <limits>
#include <map>
#include <string>

#include "divattn/errors.hpp"

namespace divattn {

void LossWeights::validate() const {
  if (!(beta_tr >= 0.0 && beta_of >= 0.0 && beta_ow >= 0.0 && margin_alpha >= 0.0)) {
    throw ContractError("loss weights must be non-negative");
  }
}

std::pair<std::size_t, std::size_t> Batch::composition() const {
  if (embeddings.rank() != 2 || embeddings.dim(0) != labels.size()) {
    throw DimensionError("batch: embeddings rows must match labels");
  }
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) throw ContractError("triplet batch needs at least two identities");
  const std::size_t k = counts.begin()->second;
  for (const auto& [label, n] : counts) {
    if (n < 2) throw ContractError("identity " + std::to_string(label) + " has a single instance");
    if (n != k) throw ContractError("batch is not P x K: identity counts differ");
  }
  return {counts.size(), k};
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  ad::Tape tape;
  return ad::cross_entropy(tape.constant(logits), labels).value().item();
}

ad::Var cross_entropy(ad::Var logits, std::span<const int> labels) {
  return ad::cross_entropy(logits, labels);
}

ad::Var batch_hard_triplet(ad::Var embeddings, std::span<const int> labels, double alpha) {
  Batch check{embeddings.value(), {labels.begin(), labels.end()}};
  check.composition();
  const std::size_t n = labels.size();
  ad::Var dist = ad::pairwise_distance(embeddings, kDistanceFloor);
  const Tensor& d = dist.value();
  std::vector<std::size_t> hardest_pos(n), hardest_neg(n);
  for (std::size_t a = 0; a < n; ++a) {
    double far = -1.0, near = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double v = d.at(a, j);
      if (labels[j] == labels[a]) {
        if (v > far) {
          far = v;
          hardest_pos[a] = a * n + j;
        }
      } else if (v < near) {
        near = v;
        hardest_neg[a] = a * n + j;
      }
    }
  }
  ad::Var pos = ad::gather(dist, hardest_pos);
  ad::Var neg = ad::gather(dist, hardest_neg);
  return ad::mean(ad::relu(ad::add_scalar(ad::sub(pos, neg), alpha)));
}

double batch_hard_triplet(const Batch& batch, double alpha) {
  ad::Tape tape;
  return batch_hard_triplet(tape.constant(batch.embeddings), batch.labels, alpha).value().item();
}

double total_loss(double xent, double triplet, double of_pen, double ow_pen,
                  const LossWeights& w) {
  return xent + w.beta_tr * triplet + w.beta_of * of_pen + w.beta_ow * ow_pen;
}

ad::Var total_loss(ad::Var xent, ad::Var triplet, ad::Var of_pen, ad::Var ow_pen,
                   const LossWeights& w) {
  ad::Var l = ad::add(xent, ad::scale(triplet, w.beta_tr));
  l = ad::add(l, ad::scale(of_pen, w.beta_of));
  return ad::add(l, ad::scale(ow_pen, w.beta_ow));
}

}  // namespace divattn
