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
#include <numbers>
#include <vector>

#include "divattn/checks.hpp"
#include "divattn/errors.hpp"
#include "divattn/orthogonality.hpp"
#include "divattn/rng.hpp"

namespace divattn {
namespace {

// Closed-form eigenvalues of a symmetric 3 x 3 matrix from its
// characteristic polynomial (trigonometric solution), ascending.
std::vector<double> cubic_eigenvalues(const Tensor& a) {
  const double p1 = a.at(0, 1) * a.at(0, 1) + a.at(0, 2) * a.at(0, 2) + a.at(1, 2) * a.at(1, 2);
  const double q = (a.at(0, 0) + a.at(1, 1) + a.at(2, 2)) / 3.0;
  const double p2 = (a.at(0, 0) - q) * (a.at(0, 0) - q) + (a.at(1, 1) - q) * (a.at(1, 1) - q) +
                    (a.at(2, 2) - q) * (a.at(2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  Tensor b = a;
  for (std::size_t i = 0; i < 3; ++i) b.at(i, i) -= q;
  for (double& v : b.data()) v /= p;
  const double det = b.at(0, 0) * (b.at(1, 1) * b.at(2, 2) - b.at(1, 2) * b.at(2, 1)) -
                     b.at(0, 1) * (b.at(1, 0) * b.at(2, 2) - b.at(1, 2) * b.at(2, 0)) +
                     b.at(0, 2) * (b.at(1, 0) * b.at(2, 1) - b.at(1, 1) * b.at(2, 0));
  const double phi = std::acos(std::clamp(det / 2.0, -1.0, 1.0)) / 3.0;
  std::vector<double> e{q + 2.0 * p * std::cos(phi),
                        q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0), 0.0};
  e[2] = 3.0 * q - e[0] - e[1];
  std::sort(e.begin(), e.end());
  return e;
}

TEST(OrthogonalityTest, JacobiMatchesCharacteristicPolynomial) {
  for (std::uint64_t t = 0; t < 50; ++t) {
    Rng rng(derive_seed(5, "cubic", t));
    const Tensor f = random_uniform({3, 5}, rng);
    const Tensor g = gram(f);
    const std::vector<double> want = cubic_eigenvalues(g);
    const std::vector<double> got = symmetric_eigenvalues(g);
    ASSERT_EQ(got.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], want[i], 1e-9 * (1.0 + want[2]));
  }
}

TEST(OrthogonalityTest, GramIsFTimesFTranspose) {
  const Tensor f = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(gram(f), Tensor::matrix({{14, 32}, {32, 77}}));
}

TEST(OrthogonalityTest, PowerIterationOnDiagonal) {
  Tensor x = Tensor::identity(3);
  x.at(0, 0) = 5.0;
  x.at(1, 1) = 2.0;
  PowerIterState s = init_power_iter(3, 4);
  const double lambda = power_iter_lambda(x, SvdoConfig{1.0, 60, 4}, s);
  EXPECT_NEAR(lambda, 5.0, 1e-9);
  EXPECT_FALSE(s.degenerate);
}

TEST(OrthogonalityTest, ZeroMatrixIsDegenerate) {
  PowerIterState s = init_power_iter(4, 1);
  EXPECT_EQ(power_iter_lambda(Tensor({4, 4}), SvdoConfig{}, s), 0.0);
  EXPECT_TRUE(s.degenerate);
}

TEST(OrthogonalityTest, PenaltyVanishesForOrthogonalRows) {
  Rng rng(6);
  const Tensor f = matrix_with_spectrum({4.0, 4.0, 4.0}, 7, rng);
  EXPECT_NEAR(svdo_penalty(f, SvdoConfig{1.0, 10, 1}), 0.0, 1e-18);
}

TEST(OrthogonalityTest, EstimatesTrackSpectrumWithManyIterations) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    Rng rng(derive_seed(6, "spec", t));
    const std::vector<double> eig{9.0, 4.0, 2.0, 1.0};
    const Tensor f = matrix_with_spectrum(eig, 6, rng);
    const SvdoEstimate e = svdo_estimate(f, SvdoConfig{0.5, 200, t});
    EXPECT_NEAR(e.lambda_max, 9.0, 1e-6);
    EXPECT_NEAR(e.lambda_min, 1.0, 1e-6);
    EXPECT_NEAR(e.penalty, 0.5 * 64.0, 1e-4);
  }
}

TEST(OrthogonalityTest, TapeAndTensorPathsAgree) {
  Rng rng(7);
  const Tensor f = random_uniform({4, 9}, rng);
  const SvdoConfig cfg{0.3, 2, 11};
  ad::Tape tape;
  const ad::Var pv = svdo_penalty(tape.leaf(f), cfg);
  EXPECT_NEAR(pv.value().item(), svdo_penalty(f, cfg), 1e-12);
}

TEST(OrthogonalityTest, WeightViewColumnsAreFilters) {
  Rng rng(8);
  const Tensor w = random_uniform({5, 2, 3, 3}, rng);
  const WeightMatrixView v = weight_matrix_view(w);
  EXPECT_EQ(v.matrix.shape(), (Shape{18, 5}));
  EXPECT_EQ(v.source_shape, w.shape());
  for (std::size_t m = 0; m < 5; ++m)
    for (std::size_t r = 0; r < 18; ++r) EXPECT_EQ(v.matrix.at(r, m), w[m * 18 + r]);
}

TEST(OrthogonalityTest, OfPenaltyReductions) {
  Rng rng(9);
  const Tensor maps = random_uniform({3, 4, 2, 2}, rng);
  const SvdoConfig cfg{1.0, 2, 3};
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) total += svdo_penalty(flatten_spatial(batch_item(maps, i)), cfg);
  EXPECT_NEAR(of_penalty(maps, cfg, Reduction::kSum), total, 1e-10);
  EXPECT_NEAR(of_penalty(maps, cfg, Reduction::kMean), total / 3.0, 1e-10);
}

TEST(OrthogonalityTest, ConditionNumber) {
  EXPECT_NEAR(condition_number(Tensor::matrix({{3, 0}, {0, 1}})), 3.0, 1e-12);
  EXPECT_TRUE(std::isinf(condition_number(Tensor::matrix({{1, 1}, {1, 1}}))));
}

TEST(OrthogonalityTest, InvalidConfigIsRejected) {
  EXPECT_THROW((SvdoConfig{1.0, 0, 0}.validate()), ContractError);
  EXPECT_THROW((SvdoConfig{-1.0, 2, 0}.validate()), ContractError);
}

}  // namespace
}  // namespace divattn
