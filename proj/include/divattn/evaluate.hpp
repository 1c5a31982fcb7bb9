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
#include <optional>
#include <span>
#include <vector>

#include "divattn/tensor.hpp"

namespace divattn {

/// Per-query gallery ranking by ascending Euclidean distance, ties broken by
/// gallery index.
struct RankingResult {
  struct Query {
    std::vector<std::size_t> order;  // gallery indices, excluded ones removed
    std::vector<double> distances;   // aligned with order
    std::vector<bool> matches;       // aligned with order
  };
  std::vector<Query> queries;
};

/// With camera ids, gallery entries sharing both identity and camera with
/// the query are removed from its ranking.
RankingResult rank_gallery(const Tensor& query_emb, const Tensor& gallery_emb,
                           std::span<const int> query_labels, std::span<const int> gallery_labels,
                           std::optional<std::span<const int>> query_cams = std::nullopt,
                           std::optional<std::span<const int>> gallery_cams = std::nullopt);

/// A retrieval metric averaged over the queries that have at least one true
/// match; `skipped` counts the others.
struct RetrievalScore {
  double value = 0.0;
  std::size_t skipped = 0;
};

RetrievalScore cmc_topk(const RankingResult& r, std::size_t k);
RetrievalScore mean_ap(const RankingResult& r);

/// Interpolation-free average precision of one ranked match list, accumulated
/// in long double and rounded once.
double average_precision(const std::vector<bool>& matches);

inline constexpr std::size_t kCorrelationBins = 50;

struct CorrelationReport {
  Tensor matrix;  // C x C absolute Pearson correlations
  double mean_offdiag = 0.0;
  double mean_full = 0.0;
  std::vector<std::size_t> histogram;  // over unique off-diagonal pairs, [0, 1]
  std::size_t constant_channels = 0;
};

/// Channel correlation of a C x H x W map (H * W >= 2). Constant channels
/// correlate 0 with everything, themselves included.
CorrelationReport correlation_report(const Tensor& feature_map);

}  // namespace divattn
