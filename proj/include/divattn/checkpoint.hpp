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


// Checkpoint directory layout:
//   params.bin    every parameter then every buffer, in the tensor binary form
//   manifest.txt  one line per record: kind name shape byte-offset
//   config.txt    the full run configuration
//   run.txt       variant, seed, number of classes, run id, config path and
//                 output directory

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "divattn/network.hpp"
#include "divattn/train.hpp"

namespace divattn {

struct RunManifest {
  std::string config_path;  // empty for built-in defaults
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string run_id;
};

/// Short hex digest of the configuration text, variant and seed.
std::string make_run_id(const RunConfig& config, const VariantSpec& variant, std::uint64_t seed);

RunManifest make_manifest(const std::string& config_path, const RunConfig& config,
                          const VariantSpec& variant, std::uint64_t seed,
                          const std::string& out_dir);

void save_checkpoint(const std::filesystem::path& dir, const Network& net,
                     const RunConfig& config, const VariantSpec& variant,
                     const RunManifest& manifest);

struct LoadedCheckpoint {
  RunConfig config;
  VariantSpec variant;
  RunManifest manifest;
  Network network;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace divattn
