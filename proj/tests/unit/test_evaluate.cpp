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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "divattn/evaluate.hpp"
#include "divattn/rng.hpp"

namespace divattn {
namespace {

struct Brute {
  double map = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
};

// Sorts every gallery entry per query by (distance, index) and scores it
// from the definitions, skipping queries without a true match.
Brute brute_force(const Tensor& q, const Tensor& g, const std::vector<int>& ql,
                  const std::vector<int>& gl) {
  Brute out;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < q.dim(0); ++i) {
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t j = 0; j < g.dim(0); ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < q.dim(1); ++k) sq += std::pow(q.at(i, k) - g.at(j, k), 2);
      ranked.emplace_back(std::sqrt(sq), j);
    }
    std::sort(ranked.begin(), ranked.end());
    std::size_t hits = 0, first = ranked.size();
    long double ap = 0.0L;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (gl[ranked[r].second] != ql[i]) continue;
      ++hits;
      first = std::min(first, r);
      ap += static_cast<long double>(hits) / static_cast<long double>(r + 1);
    }
    if (hits == 0) continue;
    ++valid;
    out.map += static_cast<double>(ap / static_cast<long double>(hits));
    out.top1 += first < 1 ? 1.0 : 0.0;
    out.top5 += first < 5 ? 1.0 : 0.0;
  }
  out.map /= static_cast<double>(valid);
  out.top1 /= static_cast<double>(valid);
  out.top5 /= static_cast<double>(valid);
  return out;
}

TEST(EvaluateTest, HandAveragePrecision) {
  EXPECT_EQ(average_precision({false, true}), 0.5);
  EXPECT_EQ(average_precision({true, false, true}), 5.0 / 6.0);
  EXPECT_EQ(average_precision({true, false, false, true}), 0.75);
  EXPECT_EQ(average_precision({false, false}), 0.0);
}

TEST(EvaluateTest, MatchesBruteForceOnRandomInstances) {
  for (std::uint64_t t = 0; t < 100; ++t) {
    Rng rng(derive_seed(21, "metrics", t));
    const std::size_t nq = 1 + rng() % 20, ng = 1 + rng() % 50, ids = 1 + rng() % 6;
    // Integer coordinates make distance ties common.
    Tensor q({nq, 2}), g({ng, 2});
    for (double& v : q.data()) v = static_cast<double>(rng() % 4);
    for (double& v : g.data()) v = static_cast<double>(rng() % 4);
    std::vector<int> ql(nq), gl(ng);
    for (int& l : ql) l = static_cast<int>(rng() % ids);
    for (int& l : gl) l = static_cast<int>(rng() % ids);
    gl[0] = ql[0];
    const RankingResult r = rank_gallery(q, g, ql, gl);
    const Brute b = brute_force(q, g, ql, gl);
    EXPECT_EQ(mean_ap(r).value, b.map) << "instance " << t;
    EXPECT_EQ(cmc_topk(r, 1).value, b.top1) << "instance " << t;
    EXPECT_EQ(cmc_topk(r, 5).value, b.top5) << "instance " << t;
  }
}

TEST(EvaluateTest, QueriesWithoutMatchesAreSkipped) {
  const Tensor q = Tensor::matrix({{0.0}, {1.0}});
  const Tensor g = Tensor::matrix({{0.0}, {2.0}});
  const std::vector<int> ql{7, 9}, gl{7, 7};
  const RankingResult r = rank_gallery(q, g, ql, gl);
  EXPECT_EQ(mean_ap(r).skipped, 1u);
  EXPECT_EQ(mean_ap(r).value, 1.0);
}

TEST(EvaluateTest, SameCameraMatchesAreRemoved) {
  const Tensor q = Tensor::matrix({{0.0}});
  const Tensor g = Tensor::matrix({{0.0}, {1.0}, {2.0}});
  const std::vector<int> ql{1}, gl{1, 2, 1}, qc{0}, gc{0, 0, 1};
  const RankingResult r = rank_gallery(q, g, ql, gl, std::span<const int>(qc), std::span<const int>(gc));
  EXPECT_EQ(r.queries[0].order, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(mean_ap(r).value, 0.5);
}

TEST(EvaluateTest, TiesBreakByGalleryIndex) {
  const Tensor q = Tensor::matrix({{0.0}});
  const Tensor g = Tensor::matrix({{1.0}, {-1.0}, {1.0}});
  const std::vector<int> ql{0}, gl{1, 0, 1};
  const RankingResult r = rank_gallery(q, g, ql, gl);
  EXPECT_EQ(r.queries[0].order, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(cmc_topk(r, 1).value, 0.0);
  EXPECT_EQ(cmc_topk(r, 2).value, 1.0);
}

TEST(EvaluateTest, CorrelationOfLinearlyRelatedChannels) {
  Tensor a({4, 1, 5});
  for (std::size_t p = 0; p < 5; ++p) {
    const double x = static_cast<double>(p * p);
    a[p] = x;
    a[5 + p] = 2.0 * x + 1.0;
    a[10 + p] = -x;
    a[15 + p] = 3.0;
  }
  const CorrelationReport r = correlation_report(a);
  EXPECT_EQ(r.constant_channels, 1u);
  EXPECT_NEAR(r.matrix.at(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(r.matrix.at(0, 2), 1.0, 1e-12);
  EXPECT_EQ(r.matrix.at(3, 3), 0.0);
  EXPECT_NEAR(r.mean_offdiag, 6.0 / 12.0, 1e-12);
  EXPECT_NEAR(r.mean_full, 9.0 / 16.0, 1e-12);
  EXPECT_EQ(std::accumulate(r.histogram.begin(), r.histogram.end(), std::size_t{0}), 6u);
  EXPECT_EQ(r.histogram.size(), kCorrelationBins);
}

}  // namespace
}  // namespace divattn
