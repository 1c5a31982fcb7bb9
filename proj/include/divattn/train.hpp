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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "divattn/autodiff.hpp"
#include "divattn/dataset.hpp"
#include "divattn/losses.hpp"
#include "divattn/network.hpp"
#include "divattn/orthogonality.hpp"

namespace divattn {

/// Two-step schedule: stage 1 trains only the non-backbone parameters with
/// cross-entropy and triplet loss, stage 2 trains everything with the full
/// loss. The learning rate is multiplied by lr_decay once each milestone
/// number of stage-2 epochs has completed.
struct TrainSchedule {
  int stage1_epochs = 2;
  int stage2_epochs = 12;
  double base_lr = 3e-4;
  double lr_decay = 0.1;
  std::vector<int> milestones{6, 8};
  /// 0 means one pass over the training images per epoch.
  std::size_t batches_per_epoch = 20;
  std::size_t identities_per_batch = 4;  // P
  std::size_t instances_per_identity = 4;  // K

  void validate() const;
  /// Learning rate for a 0-based epoch over the whole run.
  double lr_at(int epoch) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct RunConfig {
  NetworkConfig network;
  ToyDatasetConfig dataset;
  TrainSchedule schedule;
  AdamConfig adam;
  LossWeights loss;
  int svdo_iterations = 2;
  Reduction of_reduction = Reduction::kMean;
  Reduction ow_reduction = Reduction::kSum;

  void validate() const;
};

/// Adam with bias correction and a step count per parameter, so parameters
/// that start training late begin with a fresh correction.
class Adam {
 public:
  explicit Adam(const AdamConfig& config) : config_(config) {}

  /// Updates every parameter whose gradient is present.
  void step(std::vector<Parameter>& params, std::span<const std::optional<Tensor>> grads,
            double lr);
  std::size_t steps(std::size_t param) const { return param < t_.size() ? t_[param] : 0; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::vector<std::size_t> t_;
};

struct EpochLog {
  int epoch = 0;  // 0-based over the run
  int stage = 1;
  double lr = 0.0;
  double loss = 0.0;
  double xent = 0.0;
  double triplet = 0.0;
  double of = 0.0;
  double ow = 0.0;
  double train_top1 = 0.0;
};

struct RetrievalMetrics {
  double top1 = 0.0;
  double top5 = 0.0;
  double map = 0.0;
};

struct TrainResult {
  Network network;
  std::vector<EpochLog> log;
  std::optional<RetrievalMetrics> stage1;
  RetrievalMetrics final_metrics;
};

/// Called after every epoch with its log and the network state at that point.
using EpochCallback = std::function<void(const EpochLog&, const Network&)>;

/// Seed of the toy dataset for a run's master seed.
std::uint64_t dataset_seed(std::uint64_t master);

TrainResult train(const ToyDataset& dataset, const RunConfig& config, const VariantSpec& variant,
                  std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Classification accuracy on the training images in evaluation mode.
double train_top1(Network& net, const ToyDataset& dataset, const VariantSpec& variant);
/// Query/gallery retrieval metrics in evaluation mode.
RetrievalMetrics evaluate_retrieval(Network& net, const ToyDataset& dataset,
                                    const VariantSpec& variant);
/// Evaluation-mode embeddings of the given images, batched.
Tensor embed_images(Network& net, const ToyDataset& dataset,
                    const std::vector<std::size_t>& indices, const VariantSpec& variant);
/// Evaluation-mode value of a named forward site (see ForwardResult::sites),
/// one tensor per image.
std::vector<Tensor> site_values(Network& net, const ToyDataset& dataset,
                                const std::vector<std::size_t>& indices,
                                const VariantSpec& variant, const std::string& site);

}  // namespace divattn
