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

#include <set>
#include <string>

#include "divattn/errors.hpp"
#include "divattn/network.hpp"
#include "divattn/rng.hpp"
#include "tiny_config.hpp"

namespace divattn {
namespace {

Network tiny_network(std::uint64_t seed = 3) {
  return Network(testing::tiny_run_config().network, 4, seed);
}

Tensor tiny_images(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return random_uniform({n, 3, 16, 8}, rng);
}

TEST(VariantTest, ParseAndPrint) {
  EXPECT_EQ(VariantSpec::parse("baseline"), VariantSpec{});
  EXPECT_EQ(VariantSpec::parse(""), VariantSpec{});
  const VariantSpec full = VariantSpec::parse("full");
  EXPECT_TRUE(full.use_pam && full.use_cam && full.use_of && full.use_ow && full.use_triplet);
  EXPECT_EQ(VariantSpec::parse("ow,pam").to_string(), "pam,ow");
  EXPECT_EQ(VariantSpec{}.to_string(), "baseline");
  for (const char* s : {"pam", "cam,of", "pam,cam,of,ow", "triplet"}) {
    EXPECT_EQ(VariantSpec::parse(VariantSpec::parse(s).to_string()), VariantSpec::parse(s));
  }
  try {
    VariantSpec::parse("pam,bogus");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "variant");
  }
}

TEST(NetworkTest, ConfigValidationNamesKey) {
  NetworkConfig c = testing::tiny_run_config().network;
  c.k_g = 0;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "embedding.k_g");
  }
}

TEST(NetworkTest, EmbeddingAndLogitShapes) {
  Network net = tiny_network();
  ad::Tape tape;
  const ForwardResult r = net.forward(tape, tiny_images(3, 1), ForwardOptions{});
  EXPECT_EQ(r.embedding.shape(), (Shape{3, net.config().embedding_dim()}));
  EXPECT_EQ(r.logits.shape(), (Shape{3, 4}));
  EXPECT_EQ(r.params.size(), net.parameters().size());
  for (const char* site : {"cam_early", "t_a", "cam_branch", "pam_branch", "attentive_final", "t_g"}) {
    EXPECT_TRUE(r.sites.count(site)) << site;
  }
}

TEST(NetworkTest, RegularizedSiteAndWeightCounts) {
  EXPECT_EQ(of_site_names().size(), 4u);
  Network net = tiny_network();
  ASSERT_EQ(net.ow_parameters().size(), 6u);
  for (auto i : net.ow_parameters()) EXPECT_EQ(net.parameters()[i].value.rank(), 4u);
}

TEST(NetworkTest, ZeroGammaAttentionEqualsRemovedAttention) {
  Network net = tiny_network();
  const Tensor x = tiny_images(2, 5);
  EXPECT_EQ(net.embed(x, VariantSpec::parse("pam,cam")), net.embed(x, VariantSpec{}));
  for (const char* g : {"cam_early.gamma", "cam_branch.gamma", "pam_branch.gamma"}) {
    net.parameters()[net.parameter_index(g)].value = Tensor::scalar(0.5);
  }
  EXPECT_NE(net.embed(x, VariantSpec::parse("pam,cam")), net.embed(x, VariantSpec{}));
}

TEST(NetworkTest, EvaluationIsBitwiseDeterministic) {
  Network a = tiny_network(9), b = tiny_network(9);
  const Tensor x = tiny_images(4, 6);
  const VariantSpec v = VariantSpec::parse("full");
  EXPECT_EQ(a.embed(x, v), a.embed(x, v));
  EXPECT_EQ(a.embed(x, v), b.embed(x, v));
  ad::Tape t1, t2;
  ForwardOptions o1, o2;
  o1.variant = o2.variant = v;
  o2.step_seed = 12345;
  EXPECT_EQ(a.forward(t1, x, o1).embedding.value(), a.forward(t2, x, o2).embedding.value());
}

TEST(NetworkTest, DropoutFollowsStepSeed) {
  Network net = tiny_network();
  const Tensor x = tiny_images(4, 7);
  const auto run = [&](std::uint64_t s) {
    ad::Tape tape;
    ForwardOptions o;
    o.mode = Mode::kTrain;
    o.step_seed = s;
    return net.forward(tape, x, o).embedding.value();
  };
  EXPECT_EQ(run(1), run(1));
  EXPECT_NE(run(1), run(2));
}

TEST(NetworkTest, TrainingModeUpdatesRunningStatistics) {
  Network net = tiny_network();
  const std::size_t mean = net.buffer_index("block1.bn.running_mean");
  const Tensor before = net.buffers()[mean].value;
  ad::Tape tape;
  ForwardOptions o;
  o.mode = Mode::kTrain;
  net.forward(tape, tiny_images(4, 8), o);
  EXPECT_NE(net.buffers()[mean].value, before);
  const Tensor after = net.buffers()[mean].value;
  ad::Tape eval;
  net.forward(eval, tiny_images(4, 8), ForwardOptions{});
  EXPECT_EQ(net.buffers()[mean].value, after);
}

TEST(NetworkTest, FrozenBackboneGetsNoGradient) {
  Network net = tiny_network();
  ad::Tape tape;
  ForwardOptions o;
  o.mode = Mode::kTrain;
  o.variant = VariantSpec::parse("full");
  o.train_backbone = false;
  const ForwardResult r = net.forward(tape, tiny_images(4, 9), o);
  const ad::GradientMap g = ad::backward(tape, ad::sum(r.embedding));
  std::size_t backbone = 0;
  for (std::size_t i = 0; i < r.params.size(); ++i) {
    const bool is_backbone = net.parameters()[i].group == ParamGroup::kBackbone;
    backbone += is_backbone;
    if (is_backbone) {
      EXPECT_FALSE(g.contains(r.params[i])) << net.parameters()[i].name;
    }
  }
  EXPECT_GT(backbone, 0u);
}

TEST(NetworkTest, FreezeGammaMarksGammasFixed) {
  NetworkConfig c = testing::tiny_run_config().network;
  c.freeze_gamma = true;
  Network net(c, 4, 1);
  std::set<std::string> frozen;
  for (const Parameter& p : net.parameters()) {
    if (!p.trainable) frozen.insert(p.name);
  }
  EXPECT_EQ(frozen, (std::set<std::string>{"cam_early.gamma", "cam_branch.gamma", "pam_branch.gamma"}));
}

TEST(NetworkTest, PenaltiesArePositiveScalars) {
  Network net = tiny_network();
  ad::Tape tape;
  ForwardOptions o;
  o.mode = Mode::kTrain;
  const ForwardResult r = net.forward(tape, tiny_images(2, 10), o);
  const SvdoConfig cfg{1.0, 2, 4};
  EXPECT_GT(net.of_penalty(r, cfg, Reduction::kMean).value().item(), 0.0);
  EXPECT_GT(net.ow_penalty(r, cfg, Reduction::kSum).value().item(), 0.0);
}

TEST(NetworkTest, RejectsWrongInputShape) {
  Network net = tiny_network();
  ad::Tape tape;
  EXPECT_THROW(net.forward(tape, Tensor({1, 3, 8, 8}), ForwardOptions{}), DimensionError);
  EXPECT_THROW(net.parameter_index("nope"), ContractError);
}

}  // namespace
}  // namespace divattn
