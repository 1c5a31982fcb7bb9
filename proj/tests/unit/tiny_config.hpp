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

#include "divattn/train.hpp"

namespace divattn::testing {

/// A network and dataset small enough to train in well under a second.
inline RunConfig tiny_run_config() {
  RunConfig c;
  c.network.widths = {4, 4, 4, 8};
  c.network.branch_width = 8;
  c.network.input = {3, 16, 8};
  c.network.attentive_width = 4;
  c.network.k_a = 4;
  c.network.k_g = 4;
  c.dataset.num_ids = 8;
  c.dataset.instances_per_id = 5;
  c.dataset.train_ids = 4;
  c.dataset.queries_per_id = 1;
  c.dataset.image = c.network.input;
  c.schedule.stage1_epochs = 1;
  c.schedule.stage2_epochs = 3;
  c.schedule.milestones = {1, 2};
  c.schedule.batches_per_epoch = 2;
  c.schedule.identities_per_batch = 2;
  c.schedule.instances_per_identity = 2;
  return c;
}

}  // namespace divattn::testing
