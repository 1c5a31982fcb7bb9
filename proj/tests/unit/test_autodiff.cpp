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

#include <cmath>
#include <vector>

#include "divattn/autodiff.hpp"
#include "divattn/errors.hpp"
#include "divattn/rng.hpp"

namespace divattn {
namespace {

TEST(AutodiffTest, ProductRule) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Tensor::vector({2.0, -3.0}));
  const ad::Var y = tape.leaf(Tensor::vector({5.0, 7.0}));
  const ad::Var loss = ad::sum(x * y);
  const ad::GradientMap g = ad::backward(tape, loss);
  EXPECT_EQ(g.at(x).values(), (std::vector<double>{5.0, 7.0}));
  EXPECT_EQ(g.at(y).values(), (std::vector<double>{2.0, -3.0}));
}

TEST(AutodiffTest, ReusedNodeAccumulates) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Tensor::scalar(3.0));
  const ad::Var loss = ad::sum(ad::add(ad::mul(x, x), x));
  EXPECT_DOUBLE_EQ(ad::backward(tape, loss).at(x).item(), 7.0);
}

TEST(AutodiffTest, ConstantsReceiveNoGradient) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  const ad::Var c = tape.constant(Tensor::vector({4.0, 4.0}));
  const ad::GradientMap g = ad::backward(tape, ad::sum(x * c));
  EXPECT_TRUE(g.contains(x));
  EXPECT_FALSE(g.contains(c));
  EXPECT_EQ(g.at(c).values(), (std::vector<double>{0.0, 0.0}));
}

TEST(AutodiffTest, NonScalarLossIsRejected) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(ad::backward(tape, x), ContractError);
}

TEST(AutodiffTest, MixingTapesIsRejected) {
  ad::Tape t1, t2;
  const ad::Var a = t1.leaf(Tensor::scalar(1.0));
  const ad::Var b = t2.leaf(Tensor::scalar(1.0));
  EXPECT_THROW(ad::add(a, b), ContractError);
}

TEST(AutodiffTest, SqrtFloorHasZeroGradientBelowFloor) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Tensor::vector({0.0, 4.0}));
  const ad::GradientMap g = ad::backward(tape, ad::sum(ad::sqrt_floor(x, 1e-12)));
  EXPECT_EQ(g.at(x)[0], 0.0);
  EXPECT_DOUBLE_EQ(g.at(x)[1], 0.25);
}

TEST(AutodiffTest, SoftmaxCrossEntropyGradient) {
  ad::Tape tape;
  const ad::Var z = tape.leaf(Tensor::matrix({{1.0, 2.0, 3.0}}));
  const std::vector<int> label{2};
  const ad::GradientMap g = ad::backward(tape, ad::cross_entropy(z, label));
  const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0), s = e1 + e2 + e3;
  EXPECT_NEAR(g.at(z)[0], e1 / s, 1e-14);
  EXPECT_NEAR(g.at(z)[1], e2 / s, 1e-14);
  EXPECT_NEAR(g.at(z)[2], e3 / s - 1.0, 1e-14);
}

// Random compositions of matmul, softmax, relu, transpose and norm.
TEST(AutodiffTest, RandomCompositionsPassFiniteDifference) {
  for (std::uint64_t t = 0; t < 20; ++t) {
    Rng rng(derive_seed(99, "compose", t));
    const std::size_t r = 2 + rng() % 3, c = 2 + rng() % 3;
    const Tensor w = random_uniform({c, r}, rng);
    const auto f = [&](ad::Var x) {
      ad::Tape& tape = x.tape();
      const ad::Var wv = tape.constant(w);
      const ad::Var h = ad::softmax_rows(ad::matmul(x, wv));
      const ad::Var k = ad::relu(ad::add_scalar(ad::transpose(h), -0.1));
      return ad::add(ad::norm(k), ad::mean(ad::square(x)));
    };
    const auto res = ad::finite_diff_check(f, random_uniform({r, c}, rng));
    EXPECT_LT(res.max_rel_error, 1e-5) << "trial " << t;
  }
}

TEST(AutodiffTest, BatchNormTrainingGradient) {
  Rng rng(3);
  const Tensor gamma = random_uniform({3}, rng), beta = random_uniform({3}, rng);
  const Tensor weights = random_uniform({4, 3, 2, 2}, rng);
  const auto f = [&](ad::Var x) {
    ad::Tape& tape = x.tape();
    ad::BatchNormStats stats;
    const ad::Var y = ad::batch_norm(x, tape.constant(gamma), tape.constant(beta), 1e-5, true,
                                     nullptr, &stats);
    return ad::sum(ad::mul(y, tape.constant(weights)));
  };
  EXPECT_LT(ad::finite_diff_check(f, random_uniform({4, 3, 2, 2}, rng)).max_rel_error, 1e-5);
}

TEST(AutodiffTest, SelectAndGatherRouteGradients) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  const ad::Var row = ad::select(x, 1);
  EXPECT_EQ(row.value().values(), (std::vector<double>{4, 5, 6}));
  const ad::Var picked = ad::gather(x, {0, 5, 5});
  const ad::GradientMap g = ad::backward(tape, ad::add(ad::sum(row), ad::sum(picked)));
  EXPECT_EQ(g.at(x).values(), (std::vector<double>{1, 0, 0, 1, 1, 3}));
}

TEST(AutodiffTest, FiniteDiffRejectsNonFinite) {
  const auto f = [](ad::Var x) { return ad::sum(ad::div(x, x)); };
  EXPECT_THROW(ad::finite_diff_check(f, Tensor::vector({0.0})), OracleFailure);
}

}  // namespace
}  // namespace divattn
