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

#include <cstdint>
#include <random>
#include <string_view>

#include "divattn/tensor.hpp"

namespace divattn {

using Rng = std::mt19937_64;

/// Derive an independent sub-seed from a master seed and a component name,
/// so that e.g. weight init and batch sampling can be perturbed separately.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name);
std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index);

Tensor random_normal(Shape shape, Rng& rng, double stddev = 1.0);
Tensor random_uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0);

}  // namespace divattn
