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


#include "divattn/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "divattn/config.hpp"
#include "divattn/errors.hpp"

namespace divattn {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ContractError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string shape_token(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out.empty() ? "scalar" : out;
}

}  // namespace

std::string make_run_id(const RunConfig& config, const VariantSpec& variant, std::uint64_t seed) {
  const std::string key =
      to_config_text(config) + "variant=" + variant.to_string() + "\nseed=" + std::to_string(seed);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key)));
  return std::string(buf, 12);
}

RunManifest make_manifest(const std::string& config_path, const RunConfig& config,
                          const VariantSpec& variant, std::uint64_t seed,
                          const std::string& out_dir) {
  return {config_path, seed, out_dir, make_run_id(config, variant, seed)};
}

void save_checkpoint(const fs::path& dir, const Network& net, const RunConfig& config,
                     const VariantSpec& variant, const RunManifest& manifest) {
  fs::create_directories(dir);
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  std::ofstream index(dir / "manifest.txt");
  if (!bin || !index) throw ContractError("cannot write checkpoint in " + dir.string());
  std::size_t offset = 0;
  auto put = [&](const char* kind, const std::string& name, const Tensor& t) {
    index << kind << ' ' << name << ' ' << shape_token(t.shape()) << ' ' << offset << '\n';
    write_tensor(bin, t);
    offset += serialized_size(t);
  };
  for (const auto& p : net.parameters()) put("param", p.name, p.value);
  for (const auto& b : net.buffers()) put("buffer", b.name, b.value);

  std::ofstream(dir / "config.txt") << to_config_text(config);
  std::ofstream(dir / "run.txt") << "variant = " << variant.to_string()
                                 << "\nseed = " << manifest.seed
                                 << "\nnum_classes = " << net.num_classes()
                                 << "\nrun_id = " << manifest.run_id
                                 << "\nconfig_path = " << manifest.config_path
                                 << "\nout_dir = " << manifest.out_dir << '\n';
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  const RunConfig config = parse_config(read_file(dir / "config.txt"));
  std::map<std::string, std::string> run;
  {
    std::istringstream in(read_file(dir / "run.txt"));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find(" =");
      if (eq == std::string::npos) continue;
      const auto value = line.find_first_not_of(' ', eq + 2);
      run[line.substr(0, eq)] = value == std::string::npos ? "" : line.substr(value);
    }
  }
  for (const char* k : {"variant", "seed", "num_classes", "run_id"}) {
    if (!run.count(k)) throw ContractError("run.txt lacks " + std::string(k));
  }
  const VariantSpec variant = VariantSpec::parse(run["variant"]);
  const std::uint64_t seed = std::stoull(run["seed"]);
  LoadedCheckpoint out{config, variant,
                       RunManifest{run["config_path"], seed, run["out_dir"], run["run_id"]},
                       Network(config.network, std::stoul(run["num_classes"]), seed)};

  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw ContractError("cannot read " + (dir / "params.bin").string());
  std::istringstream index(read_file(dir / "manifest.txt"));
  std::string kind, name, shape;
  std::size_t offset = 0, records = 0;
  while (index >> kind >> name >> shape >> offset) {
    bin.seekg(static_cast<std::streamoff>(offset));
    if (!bin) throw ContractError("manifest offset past end for " + name);
    Tensor t = read_tensor(bin);
    if (shape_token(t.shape()) != shape) throw ContractError("shape mismatch for " + name);
    Tensor& dst = kind == "param" ? out.network.parameters()[out.network.parameter_index(name)].value
                                  : out.network.buffers()[out.network.buffer_index(name)].value;
    if (dst.shape() != t.shape()) throw ContractError("checkpoint shape differs for " + name);
    dst = std::move(t);
    ++records;
  }
  if (records != out.network.parameters().size() + out.network.buffers().size()) {
    throw ContractError("checkpoint record count does not match the network");
  }
  return out;
}

}  // namespace divattn
