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


#include "divattn/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "divattn/errors.hpp"
#include "divattn/evaluate.hpp"
#include "divattn/rng.hpp"

namespace divattn {

void TrainSchedule::validate() const {
  if (stage1_epochs < 0) throw ConfigError("schedule.stage1_epochs", "must be >= 0");
  if (stage2_epochs < 1) throw ConfigError("schedule.stage2_epochs", "must be >= 1");
  if (!(base_lr > 0.0)) throw ConfigError("schedule.base_lr", "must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
    throw ConfigError("schedule.lr_decay", "must be in (0, 1]");
  }
  int prev = 0;
  for (int m : milestones) {
    if (m <= prev || m >= stage2_epochs) {
      throw ConfigError("schedule.milestones",
                        "must be increasing stage-2 epochs inside (0, stage2_epochs)");
    }
    prev = m;
  }
  if (identities_per_batch < 2) {
    throw ConfigError("schedule.identities_per_batch", "must be >= 2");
  }
  if (instances_per_identity < 2) {
    throw ConfigError("schedule.instances_per_identity", "must be >= 2");
  }
}

double TrainSchedule::lr_at(int epoch) const {
  const int s2 = epoch - stage1_epochs;
  double lr = base_lr;
  for (int m : milestones) {
    if (s2 >= m) lr *= lr_decay;
  }
  return lr;
}

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam.beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam.beta2", "must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam.epsilon", "must be positive");
}

void RunConfig::validate() const {
  network.validate();
  schedule.validate();
  adam.validate();
  loss.validate();
  if (svdo_iterations < 1) throw ConfigError("svdo.iterations", "must be >= 1");
  try {
    ToyDatasetConfig d = dataset;
    d.image = network.input;
    d.validate();
  } catch (const ContractError& e) {
    throw ConfigError("dataset", e.what());
  }
}

void Adam::step(std::vector<Parameter>& params, std::span<const std::optional<Tensor>> grads,
                double lr) {
  if (grads.size() != params.size()) throw ContractError("adam: gradient count mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
    t_.assign(params.size(), 0);
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i]) continue;
    const Tensor& g = *grads[i];
    Tensor& w = params[i].value;
    if (g.shape() != w.shape()) throw ContractError("adam: gradient shape mismatch");
    const std::size_t t = ++t_[i];
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    auto m = m_[i].data();
    auto v = v_[i].data();
    auto wd = w.data();
    for (std::size_t j = 0; j < wd.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      wd[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
    }
  }
}

std::uint64_t dataset_seed(std::uint64_t master) { return derive_seed(master, "dataset"); }

namespace {

constexpr std::size_t kEvalChunk = 32;

std::vector<std::size_t> sample_pk(const std::map<int, std::vector<std::size_t>>& by_id,
                                   std::size_t p, std::size_t k, Rng& rng) {
  std::vector<int> ids;
  ids.reserve(by_id.size());
  for (const auto& [id, _] : by_id) ids.push_back(id);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::size_t> out;
  out.reserve(p * k);
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<std::size_t> pool = by_id.at(ids[i]);
    std::shuffle(pool.begin(), pool.end(), rng);
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

}  // namespace

Tensor embed_images(Network& net, const ToyDataset& dataset,
                    const std::vector<std::size_t>& indices, const VariantSpec& variant) {
  std::vector<Tensor> rows;
  for (std::size_t start = 0; start < indices.size(); start += kEvalChunk) {
    const std::size_t end = std::min(indices.size(), start + kEvalChunk);
    const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                         indices.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor e = net.embed(dataset.batch(chunk), variant);
    for (std::size_t i = 0; i < chunk.size(); ++i) rows.push_back(batch_item(e, i));
  }
  return stack(rows);
}

std::vector<Tensor> site_values(Network& net, const ToyDataset& dataset,
                                const std::vector<std::size_t>& indices,
                                const VariantSpec& variant, const std::string& site) {
  std::vector<Tensor> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += kEvalChunk) {
    const std::size_t end = std::min(indices.size(), start + kEvalChunk);
    const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                         indices.begin() + static_cast<std::ptrdiff_t>(end));
    ad::Tape tape;
    ForwardOptions opts;
    opts.variant = variant;
    opts.train_backbone = false;
    const ForwardResult fwd = net.forward(tape, dataset.batch(chunk), opts);
    const auto it = fwd.sites.find(site);
    if (it == fwd.sites.end()) throw ContractError("unknown forward site " + site);
    for (std::size_t i = 0; i < chunk.size(); ++i) out.push_back(batch_item(it->second.value(), i));
  }
  return out;
}

double train_top1(Network& net, const ToyDataset& dataset, const VariantSpec& variant) {
  std::size_t correct = 0;
  const auto& idx = dataset.train;
  for (std::size_t start = 0; start < idx.size(); start += kEvalChunk) {
    const std::size_t end = std::min(idx.size(), start + kEvalChunk);
    const std::vector<std::size_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                         idx.begin() + static_cast<std::ptrdiff_t>(end));
    ad::Tape tape;
    ForwardOptions opts;
    opts.variant = variant;
    opts.train_backbone = false;
    const Tensor logits = net.forward(tape, dataset.batch(chunk), opts).logits.value();
    const std::size_t classes = logits.dim(1);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (logits.at(i, c) > logits.at(i, best)) best = c;
      }
      if (static_cast<int>(best) == dataset.train_label[chunk[i]]) ++correct;
    }
  }
  return idx.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(idx.size());
}

RetrievalMetrics evaluate_retrieval(Network& net, const ToyDataset& dataset,
                                    const VariantSpec& variant) {
  const Tensor q = embed_images(net, dataset, dataset.query, variant);
  const Tensor g = embed_images(net, dataset, dataset.gallery, variant);
  const RankingResult r = rank_gallery(q, g, dataset.identities(dataset.query),
                                       dataset.identities(dataset.gallery));
  return {cmc_topk(r, 1).value, cmc_topk(r, 5).value, mean_ap(r).value};
}

TrainResult train(const ToyDataset& dataset, const RunConfig& config, const VariantSpec& variant,
                  std::uint64_t seed, const EpochCallback& on_epoch) {
  config.validate();
  const TrainSchedule& sched = config.schedule;
  std::map<int, std::vector<std::size_t>> by_id;
  for (auto i : dataset.train) by_id[dataset.train_label.at(i)].push_back(i);
  if (by_id.size() < 2) throw ContractError("training needs at least two identities");
  if (by_id.size() < sched.identities_per_batch) {
    throw ContractError("fewer training identities than identities per batch");
  }
  for (const auto& [id, items] : by_id) {
    if (items.size() < sched.instances_per_identity) {
      throw ContractError("identity " + std::to_string(id) + " has fewer than K instances");
    }
  }

  TrainResult result{Network(config.network, by_id.size(), derive_seed(seed, "init")), {}, {}, {}};
  Network& net = result.network;
  Adam adam(config.adam);
  Rng sampler(derive_seed(seed, "sampler"));
  const std::size_t batch = sched.identities_per_batch * sched.instances_per_identity;
  const std::size_t batches =
      sched.batches_per_epoch > 0
          ? sched.batches_per_epoch
          : std::max<std::size_t>(1, (dataset.train.size() + batch - 1) / batch);
  const int epochs = sched.stage1_epochs + sched.stage2_epochs;
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const bool stage2 = epoch >= sched.stage1_epochs;
    EpochLog log;
    log.epoch = epoch;
    log.stage = stage2 ? 2 : 1;
    log.lr = sched.lr_at(epoch);
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const auto idx = sample_pk(by_id, sched.identities_per_batch,
                                 sched.instances_per_identity, sampler);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (auto i : idx) labels.push_back(dataset.train_label[i]);

      ad::Tape tape;
      ForwardOptions opts;
      opts.mode = Mode::kTrain;
      opts.variant = variant;
      opts.train_backbone = stage2;
      opts.step_seed = derive_seed(seed, "dropout", step);
      const ForwardResult fwd = net.forward(tape, dataset.batch(idx), opts);

      SvdoConfig svdo;
      svdo.iterations = config.svdo_iterations;
      svdo.seed = derive_seed(seed, "power-iteration", step);
      ad::Var xent = ad::cross_entropy(fwd.logits, labels);
      ad::Var trip = batch_hard_triplet(fwd.embedding, labels, config.loss.margin_alpha);
      ad::Var of = net.of_penalty(fwd, svdo, config.of_reduction);
      ad::Var ow = net.ow_penalty(fwd, svdo, config.ow_reduction);
      const ad::Var zero = tape.constant(Tensor::scalar(0.0));
      ad::Var loss = total_loss(xent, variant.use_triplet ? trip : zero,
                                stage2 && variant.use_of ? of : zero,
                                stage2 && variant.use_ow ? ow : zero, config.loss);
      const ad::GradientMap grads = ad::backward(tape, loss);
      std::vector<std::optional<Tensor>> param_grads(fwd.params.size());
      for (std::size_t i = 0; i < fwd.params.size(); ++i) {
        if (const Tensor* g = grads.find(fwd.params[i])) param_grads[i] = *g;
      }
      adam.step(net.parameters(), param_grads, log.lr);

      log.loss += loss.value().item();
      log.xent += xent.value().item();
      log.triplet += trip.value().item();
      log.of += of.value().item();
      log.ow += ow.value().item();
    }
    const double n = static_cast<double>(batches);
    log.loss /= n;
    log.xent /= n;
    log.triplet /= n;
    log.of /= n;
    log.ow /= n;
    log.train_top1 = train_top1(net, dataset, variant);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log, net);
    if (epoch + 1 == sched.stage1_epochs) {
      result.stage1 = evaluate_retrieval(net, dataset, variant);
    }
  }
  result.final_metrics = evaluate_retrieval(net, dataset, variant);
  return result;
}

}  // namespace divattn
