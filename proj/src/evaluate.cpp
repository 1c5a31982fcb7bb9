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


#include "divattn/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "divattn/errors.hpp"

namespace divattn {

RankingResult rank_gallery(const Tensor& query_emb, const Tensor& gallery_emb,
                           std::span<const int> query_labels, std::span<const int> gallery_labels,
                           std::optional<std::span<const int>> query_cams,
                           std::optional<std::span<const int>> gallery_cams) {
  if (query_emb.rank() != 2 || gallery_emb.rank() != 2) {
    throw ContractError("rank_gallery expects row-per-item embeddings");
  }
  if (query_emb.dim(1) != gallery_emb.dim(1)) throw ContractError("rank_gallery: embedding dims differ");
  const std::size_t nq = query_emb.dim(0), ng = gallery_emb.dim(0), d = query_emb.dim(1);
  if (query_labels.size() != nq || gallery_labels.size() != ng) {
    throw ContractError("rank_gallery: label counts do not match embeddings");
  }
  if (query_cams.has_value() != gallery_cams.has_value()) {
    throw ContractError("rank_gallery: camera ids must be given for both sides or neither");
  }
  if (query_cams && (query_cams->size() != nq || gallery_cams->size() != ng)) {
    throw ContractError("rank_gallery: camera id counts do not match embeddings");
  }

  RankingResult result;
  result.queries.resize(nq);
  std::vector<double> dist(ng);
  std::vector<std::size_t> idx(ng);
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t g = 0; g < ng; ++g) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = query_emb.at(q, k) - gallery_emb.at(g, k);
        sq += diff * diff;
      }
      dist[g] = std::sqrt(sq);
    }
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    auto& out = result.queries[q];
    for (std::size_t g : idx) {
      const bool same_id = gallery_labels[g] == query_labels[q];
      if (query_cams && same_id && (*gallery_cams)[g] == (*query_cams)[q]) continue;
      out.order.push_back(g);
      out.distances.push_back(dist[g]);
      out.matches.push_back(same_id);
    }
  }
  return result;
}

RetrievalScore cmc_topk(const RankingResult& r, std::size_t k) {
  RetrievalScore score;
  std::size_t hits = 0, counted = 0;
  for (const auto& q : r.queries) {
    const auto first = std::find(q.matches.begin(), q.matches.end(), true);
    if (first == q.matches.end()) {
      ++score.skipped;
      continue;
    }
    ++counted;
    if (static_cast<std::size_t>(first - q.matches.begin()) < k) ++hits;
  }
  score.value = counted ? static_cast<double>(hits) / static_cast<double>(counted) : 0.0;
  return score;
}

double average_precision(const std::vector<bool>& matches) {
  long double acc = 0.0L;
  std::size_t found = 0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (!matches[i]) continue;
    ++found;
    acc += static_cast<long double>(found) / static_cast<long double>(i + 1);
  }
  return found ? static_cast<double>(acc / static_cast<long double>(found)) : 0.0;
}

RetrievalScore mean_ap(const RankingResult& r) {
  RetrievalScore score;
  double acc = 0.0;
  std::size_t counted = 0;
  for (const auto& q : r.queries) {
    if (std::find(q.matches.begin(), q.matches.end(), true) == q.matches.end()) {
      ++score.skipped;
      continue;
    }
    ++counted;
    acc += average_precision(q.matches);
  }
  score.value = counted ? acc / static_cast<double>(counted) : 0.0;
  return score;
}

CorrelationReport correlation_report(const Tensor& feature_map) {
  if (feature_map.rank() != 3) throw DimensionError("correlation_report expects C x H x W");
  const Tensor f = flatten_spatial(feature_map);
  const auto [c, n] = f.shape2();
  if (n < 2) throw ContractError("correlation_report needs at least two pixels");

  std::vector<double> centered(c * n);
  std::vector<double> norms(c, 0.0);
  std::vector<bool> constant(c, false);
  CorrelationReport report;
  for (std::size_t i = 0; i < c; ++i) {
    double mu = 0.0;
    for (std::size_t k = 0; k < n; ++k) mu += f.at(i, k);
    mu /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double v = f.at(i, k) - mu;
      centered[i * n + k] = v;
      norms[i] += v * v;
    }
    norms[i] = std::sqrt(norms[i]);
    // Zero variance up to rounding of the channel's own magnitude.
    double scale_ref = 0.0;
    for (std::size_t k = 0; k < n; ++k) scale_ref = std::max(scale_ref, std::abs(f.at(i, k)));
    constant[i] = norms[i] <= 1e-12 * scale_ref * std::sqrt(static_cast<double>(n));
    if (constant[i]) ++report.constant_channels;
  }

  report.matrix = Tensor({c, c});
  report.histogram.assign(kCorrelationBins, 0);
  double offdiag = 0.0, full = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i; j < c; ++j) {
      double r = 0.0;
      if (!constant[i] && !constant[j]) {
        if (i == j) {
          r = 1.0;
        } else {
          double dot = 0.0;
          for (std::size_t k = 0; k < n; ++k) dot += centered[i * n + k] * centered[j * n + k];
          r = std::min(1.0, std::abs(dot) / (norms[i] * norms[j]));
        }
      }
      report.matrix.at(i, j) = r;
      report.matrix.at(j, i) = r;
      if (i == j) {
        full += r;
      } else {
        offdiag += 2.0 * r;
        full += 2.0 * r;
        const auto bin = std::min(kCorrelationBins - 1,
                                  static_cast<std::size_t>(r * static_cast<double>(kCorrelationBins)));
        ++report.histogram[bin];
      }
    }
  }
  report.mean_offdiag = c > 1 ? offdiag / static_cast<double>(c * (c - 1)) : 0.0;
  report.mean_full = full / static_cast<double>(c * c);
  return report;
}

}  // namespace divattn
