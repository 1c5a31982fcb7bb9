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
#include <set>

#include "divattn/dataset.hpp"
#include "divattn/errors.hpp"

namespace divattn {
namespace {

TEST(DatasetTest, SplitsAreDisjointAndComplete) {
  const ToyDatasetConfig cfg;
  const ToyDataset ds = make_toy_dataset(cfg, 4);
  ASSERT_EQ(ds.images.size(), cfg.num_ids * cfg.instances_per_id);
  EXPECT_EQ(ds.train.size(), cfg.train_ids * cfg.instances_per_id);
  EXPECT_EQ(ds.query.size(), (cfg.num_ids - cfg.train_ids) * cfg.queries_per_id);
  EXPECT_EQ(ds.train.size() + ds.query.size() + ds.gallery.size(), ds.images.size());
  std::set<int> train_ids, test_ids;
  for (auto i : ds.train) {
    train_ids.insert(ds.identity[i]);
    EXPECT_GE(ds.train_label[i], 0);
  }
  for (auto i : ds.query) test_ids.insert(ds.identity[i]);
  for (auto i : ds.gallery) {
    EXPECT_TRUE(test_ids.count(ds.identity[i]));
    EXPECT_EQ(ds.train_label[i], -1);
  }
  for (int id : test_ids) EXPECT_FALSE(train_ids.count(id));
  EXPECT_EQ(train_ids.size(), cfg.train_ids);
}

TEST(DatasetTest, ImagesHaveConfiguredShape) {
  const ToyDataset ds = make_toy_dataset(ToyDatasetConfig{}, 1);
  for (const Tensor& img : ds.images) EXPECT_EQ(img.shape(), (Shape{3, 48, 16}));
  EXPECT_EQ(ds.batch({0, 3, 5}).shape(), (Shape{3, 3, 48, 16}));
  EXPECT_EQ(ds.identities({0, 10}), (std::vector<int>{ds.identity[0], ds.identity[10]}));
}

TEST(DatasetTest, SeedDeterminesData) {
  const ToyDatasetConfig cfg;
  EXPECT_EQ(make_toy_dataset(cfg, 2).images, make_toy_dataset(cfg, 2).images);
  EXPECT_NE(make_toy_dataset(cfg, 2).images[0], make_toy_dataset(cfg, 3).images[0]);
}

TEST(DatasetTest, NoiseFreeInstancesDifferOnlyByJitterAndFlip) {
  ToyDatasetConfig cfg;
  cfg.noise = 0.0;
  cfg.brightness_jitter = 0.0;
  cfg.flip_prob = 0.0;
  const ToyDataset ds = make_toy_dataset(cfg, 7);
  EXPECT_EQ(ds.images[0], ds.images[1]);
  EXPECT_NE(ds.images[0], ds.images[cfg.instances_per_id]);
}

TEST(DatasetTest, InvalidConfigsRejected) {
  ToyDatasetConfig c;
  c.train_ids = c.num_ids;
  EXPECT_THROW(c.validate(), ContractError);
  c = ToyDatasetConfig{};
  c.palette_size = 1;
  EXPECT_THROW(c.validate(), ContractError);
  c = ToyDatasetConfig{};
  c.queries_per_id = c.instances_per_id;
  EXPECT_THROW(c.validate(), ContractError);
}

}  // namespace
}  // namespace divattn
