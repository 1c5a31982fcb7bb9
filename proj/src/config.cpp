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


#include "divattn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "divattn/errors.hpp"

namespace divattn {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(const std::string& key, std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key, "expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

template <typename Int>
Int to_int(const std::string& key, std::string_view v) {
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key, "expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + std::string(v) + "'");
}

Reduction to_reduction(const std::string& key, std::string_view v) {
  if (v == "mean") return Reduction::kMean;
  if (v == "sum") return Reduction::kSum;
  throw ConfigError(key, "expected mean or sum, got '" + std::string(v) + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string fmt_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto num = [&f](std::string key, auto member) {
      f.push_back({std::move(key),
                   [member](RunConfig& c, const std::string& k, std::string_view v) {
                     member(c) = to_double(k, v);
                   },
                   [member](const RunConfig& c) { RunConfig copy = c;
                     return fmt(member(copy)); }});
    };
    auto count = [&f](std::string key, auto member) {
      f.push_back({std::move(key),
                   [member](RunConfig& c, const std::string& k, std::string_view v) {
                     using T = std::remove_reference_t<decltype(member(c))>;
                     member(c) = to_int<T>(k, v);
                   },
                   [member](const RunConfig& c) {
                     RunConfig copy = c;
                     return std::to_string(member(copy));
                   }});
    };

    f.push_back({"backbone.widths",
                 [](RunConfig& c, const std::string& k, std::string_view v) {
                   c.network.widths.clear();
                   for (auto item : split_list(v)) {
                     c.network.widths.push_back(to_int<std::size_t>(k, item));
                   }
                 },
                 [](const RunConfig& c) { return fmt_list(c.network.widths); }});
    count("backbone.branch_width", [](RunConfig& c) -> std::size_t& { return c.network.branch_width; });
    f.push_back({"backbone.input_shape",
                 [](RunConfig& c, const std::string& k, std::string_view v) {
                   const auto items = split_list(v);
                   if (items.size() != 3) throw ConfigError(k, "expected channels,height,width");
                   c.network.input = {to_int<std::size_t>(k, items[0]),
                                      to_int<std::size_t>(k, items[1]),
                                      to_int<std::size_t>(k, items[2])};
                 },
                 [](const RunConfig& c) {
                   return fmt_list(std::vector<std::size_t>{
                       c.network.input.channels, c.network.input.height, c.network.input.width});
                 }});
    count("embedding.attentive_width",
          [](RunConfig& c) -> std::size_t& { return c.network.attentive_width; });
    count("embedding.k_a", [](RunConfig& c) -> std::size_t& { return c.network.k_a; });
    count("embedding.k_g", [](RunConfig& c) -> std::size_t& { return c.network.k_g; });
    num("reduction.dropout", [](RunConfig& c) -> double& { return c.network.dropout; });
    num("bn.momentum", [](RunConfig& c) -> double& { return c.network.bn_momentum; });
    num("bn.eps", [](RunConfig& c) -> double& { return c.network.bn_eps; });
    f.push_back({"attention.freeze_gamma",
                 [](RunConfig& c, const std::string& k, std::string_view v) {
                   c.network.freeze_gamma = to_bool(k, v);
                 },
                 [](const RunConfig& c) { return std::string(c.network.freeze_gamma ? "true" : "false"); }});

    count("schedule.stage1_epochs", [](RunConfig& c) -> int& { return c.schedule.stage1_epochs; });
    count("schedule.stage2_epochs", [](RunConfig& c) -> int& { return c.schedule.stage2_epochs; });
    num("schedule.base_lr", [](RunConfig& c) -> double& { return c.schedule.base_lr; });
    num("schedule.lr_decay", [](RunConfig& c) -> double& { return c.schedule.lr_decay; });
    f.push_back({"schedule.milestones",
                 [](RunConfig& c, const std::string& k, std::string_view v) {
                   c.schedule.milestones.clear();
                   if (trim(v).empty()) return;
                   for (auto item : split_list(v)) c.schedule.milestones.push_back(to_int<int>(k, item));
                 },
                 [](const RunConfig& c) { return fmt_list(c.schedule.milestones); }});
    count("schedule.batches_per_epoch",
          [](RunConfig& c) -> std::size_t& { return c.schedule.batches_per_epoch; });
    count("schedule.identities_per_batch",
          [](RunConfig& c) -> std::size_t& { return c.schedule.identities_per_batch; });
    count("schedule.instances_per_identity",
          [](RunConfig& c) -> std::size_t& { return c.schedule.instances_per_identity; });
    num("adam.beta1", [](RunConfig& c) -> double& { return c.adam.beta1; });
    num("adam.beta2", [](RunConfig& c) -> double& { return c.adam.beta2; });
    num("adam.epsilon", [](RunConfig& c) -> double& { return c.adam.epsilon; });

    num("loss.beta_tr", [](RunConfig& c) -> double& { return c.loss.beta_tr; });
    num("loss.beta_of", [](RunConfig& c) -> double& { return c.loss.beta_of; });
    num("loss.beta_ow", [](RunConfig& c) -> double& { return c.loss.beta_ow; });
    num("loss.margin", [](RunConfig& c) -> double& { return c.loss.margin_alpha; });

    count("svdo.iterations", [](RunConfig& c) -> int& { return c.svdo_iterations; });
    f.push_back({"svdo.of_reduction",
                 [](RunConfig& c, const std::string& k, std::string_view v) {
                   c.of_reduction = to_reduction(k, v);
                 },
                 [](const RunConfig& c) {
                   return std::string(c.of_reduction == Reduction::kMean ? "mean" : "sum");
                 }});
    f.push_back({"svdo.ow_reduction",
                 [](RunConfig& c, const std::string& k, std::string_view v) {
                   c.ow_reduction = to_reduction(k, v);
                 },
                 [](const RunConfig& c) {
                   return std::string(c.ow_reduction == Reduction::kMean ? "mean" : "sum");
                 }});

    count("dataset.num_ids", [](RunConfig& c) -> std::size_t& { return c.dataset.num_ids; });
    count("dataset.instances_per_id",
          [](RunConfig& c) -> std::size_t& { return c.dataset.instances_per_id; });
    count("dataset.train_ids", [](RunConfig& c) -> std::size_t& { return c.dataset.train_ids; });
    count("dataset.queries_per_id",
          [](RunConfig& c) -> std::size_t& { return c.dataset.queries_per_id; });
    num("dataset.noise", [](RunConfig& c) -> double& { return c.dataset.noise; });
    num("dataset.brightness_jitter",
        [](RunConfig& c) -> double& { return c.dataset.brightness_jitter; });
    num("dataset.flip_prob", [](RunConfig& c) -> double& { return c.dataset.flip_prob; });
    count("dataset.palette_size", [](RunConfig& c) -> std::size_t& { return c.dataset.palette_size; });
    return f;
  }();
  return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const std::string_view raw =
        text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(line), "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(key, "unknown configuration key");
    it->second->set(cfg, key, trim(line.substr(eq + 1)));
  }
  cfg.dataset.image = cfg.network.input;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_config_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace divattn
