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


#include "divattn/dataset.hpp"

#include <algorithm>
#include <random>

#include "divattn/errors.hpp"
#include "divattn/rng.hpp"

namespace divattn {

void ToyDatasetConfig::validate() const {
  if (num_ids < 2) throw ContractError("toy dataset needs at least two identities");
  if (instances_per_id < 1) throw ContractError("toy dataset needs instances");
  if (image.channels < 1 || image.height < 4 || image.width < 2) {
    throw ContractError("toy image shape too small");
  }
  if (train_ids >= num_ids) throw ContractError("toy dataset needs test identities");
  if (queries_per_id >= instances_per_id && train_ids < num_ids) {
    throw ContractError("each test identity needs gallery instances beyond its queries");
  }
  if (palette_size == 1) throw ContractError("a one-color palette makes identities identical");
  if (noise < 0.0 || brightness_jitter < 0.0 || flip_prob < 0.0 || flip_prob > 1.0) {
    throw ContractError("toy dataset noise parameters out of range");
  }
}

namespace {

using Palette = std::vector<std::vector<double>>;

Palette make_palette(std::size_t size, std::size_t channels, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Palette p(size, std::vector<double>(channels));
  for (auto& c : p)
    for (auto& v : c) v = u(rng);
  return p;
}

Tensor make_pattern(const Shape3& s, const Palette& palette, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> frac(0.0, 1.0);
  auto pick = [&] {
    if (!palette.empty()) {
      return palette[std::uniform_int_distribution<std::size_t>(0, palette.size() - 1)(rng)];
    }
    std::vector<double> c(s.channels);
    for (auto& v : c) v = u(rng);
    return c;
  };
  Tensor p({s.channels, s.height, s.width});
  // Head, torso and legs bands with independent colors.
  const std::size_t head_end = std::max<std::size_t>(1, s.height / 6);
  const std::size_t torso_end =
      head_end + static_cast<std::size_t>((0.35 + 0.2 * frac(rng)) * static_cast<double>(s.height));
  std::vector<double> bands[3];
  for (auto& b : bands) b = pick();
  for (std::size_t y = 0; y < s.height; ++y) {
    const auto& band = y < head_end ? bands[0] : (y < torso_end ? bands[1] : bands[2]);
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t x = 0; x < s.width; ++x) p.at(c, y, x) = band[c];
  }
  // Two off-center patches break the left/right symmetry.
  for (int k = 0; k < 2; ++k) {
    const std::size_t ph = std::max<std::size_t>(2, s.height / 8);
    const std::size_t pw = std::max<std::size_t>(1, s.width / 3);
    const std::size_t y0 = head_end + static_cast<std::size_t>(
                                          frac(rng) * static_cast<double>(s.height - head_end - ph));
    const std::size_t x0 = static_cast<std::size_t>(frac(rng) * static_cast<double>(s.width - pw));
    const std::vector<double> col = pick();
    for (std::size_t c = 0; c < s.channels; ++c)
      for (std::size_t y = y0; y < y0 + ph; ++y)
        for (std::size_t x = x0; x < x0 + pw; ++x) p.at(c, y, x) = col[c];
  }
  return p;
}

Tensor make_instance(const Tensor& pattern, const ToyDatasetConfig& cfg, Rng& rng) {
  const Shape3 s = pattern.shape3();
  std::uniform_real_distribution<double> jitter(-cfg.brightness_jitter, cfg.brightness_jitter);
  std::bernoulli_distribution flip(cfg.flip_prob);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double gain = 1.0 + (cfg.brightness_jitter > 0.0 ? jitter(rng) : 0.0);
  const bool flipped = cfg.flip_prob > 0.0 && flip(rng);
  Tensor img(pattern.shape());
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x) {
        const std::size_t sx = flipped ? s.width - 1 - x : x;
        double v = gain * pattern.at(c, y, sx);
        if (cfg.noise > 0.0) v += cfg.noise * noise(rng);
        img.at(c, y, x) = v;
      }
  return img;
}

}  // namespace

ToyDataset make_toy_dataset(const ToyDatasetConfig& config, std::uint64_t seed) {
  config.validate();
  ToyDataset ds;
  ds.config = config;
  Rng pattern_rng(derive_seed(seed, "toy-patterns"));
  const Palette palette = make_palette(config.palette_size, config.image.channels, pattern_rng);
  Rng instance_rng(derive_seed(seed, "toy-instances"));
  for (std::size_t id = 0; id < config.num_ids; ++id) {
    const Tensor pattern = make_pattern(config.image, palette, pattern_rng);
    for (std::size_t k = 0; k < config.instances_per_id; ++k) {
      const std::size_t index = ds.images.size();
      ds.images.push_back(make_instance(pattern, config, instance_rng));
      ds.identity.push_back(static_cast<int>(id));
      if (id < config.train_ids) {
        ds.train.push_back(index);
        ds.train_label.push_back(static_cast<int>(id));
      } else {
        ds.train_label.push_back(-1);
        (k < config.queries_per_id ? ds.query : ds.gallery).push_back(index);
      }
    }
  }
  return ds;
}

Tensor ToyDataset::batch(const std::vector<std::size_t>& indices) const {
  std::vector<Tensor> items;
  items.reserve(indices.size());
  for (auto i : indices) items.push_back(images.at(i));
  return stack(items);
}

std::vector<int> ToyDataset::identities(const std::vector<std::size_t>& indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(identity.at(i));
  return out;
}

}  // namespace divattn
