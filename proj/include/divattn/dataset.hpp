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
#include <cstdint>
#include <vector>

#include "divattn/tensor.hpp"

namespace divattn {

struct ToyDatasetConfig {
  std::size_t num_ids = 20;
  std::size_t instances_per_id = 10;
  Shape3 image{3, 48, 16};
  double noise = 1.0;
  double brightness_jitter = 0.2;
  double flip_prob = 0.5;
  /// Colors are drawn from this many palette entries, so identities share
  /// attributes; 0 draws every color freshly.
  std::size_t palette_size = 6;
  /// Identities used for training; the rest form the query/gallery split.
  std::size_t train_ids = 10;
  std::size_t queries_per_id = 2;

  void validate() const;
};

/// Synthetic re-identification data. Every identity is a fixed random
/// layout of colored body bands and patches; instances add brightness
/// jitter, horizontal flips and Gaussian noise. With a palette, single
/// attributes are shared between identities and only their combination
/// identifies a person. Training identities and
/// test identities are disjoint, and each test identity's instances are
/// split between query and gallery.
struct ToyDataset {
  ToyDatasetConfig config;
  std::vector<Tensor> images;  // each C x H x W
  std::vector<int> identity;   // original identity per image
  std::vector<std::size_t> train, query, gallery;
  /// Classifier label per image (0..train_ids-1 for training images, -1 otherwise).
  std::vector<int> train_label;

  std::size_t num_train_ids() const { return config.train_ids; }
  /// Stack the given images into an N x C x H x W batch.
  Tensor batch(const std::vector<std::size_t>& indices) const;
  std::vector<int> identities(const std::vector<std::size_t>& indices) const;
};

ToyDataset make_toy_dataset(const ToyDatasetConfig& config, std::uint64_t seed);

}  // namespace divattn
