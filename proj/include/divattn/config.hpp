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


// Flat "key = value" configuration files. Blank lines and lines starting
// with '#' are ignored; unknown keys and malformed values raise ConfigError
// naming the key.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "divattn/train.hpp"

namespace divattn {

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

/// Every key with its current value; parse_config(to_config_text(c))
/// reproduces c exactly.
std::string to_config_text(const RunConfig& config);

/// All recognised keys, in file order.
const std::vector<std::string>& config_keys();

}  // namespace divattn
