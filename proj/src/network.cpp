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


#include "divattn/network.hpp"

#include <cmath>
#include <random>

#include "divattn/attention.hpp"
#include "divattn/errors.hpp"
#include "divattn/rng.hpp"

namespace divattn {

VariantSpec VariantSpec::parse(std::string_view text) {
  VariantSpec v;
  if (text.empty() || text == "baseline" || text == "none") return v;
  if (text == "full" || text == "all") return {true, true, true, true, true};
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string_view item = text.substr(start, end - start);
    if (item == "pam") {
      v.use_pam = true;
    } else if (item == "cam") {
      v.use_cam = true;
    } else if (item == "of") {
      v.use_of = true;
    } else if (item == "ow") {
      v.use_ow = true;
    } else if (item == "triplet") {
      v.use_triplet = true;
    } else if (!item.empty()) {
      throw ConfigError("variant", "unknown variant component '" + std::string(item) + "'");
    }
    start = end + 1;
  }
  return v;
}

std::string VariantSpec::to_string() const {
  std::string out;
  auto put = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  put(use_pam, "pam");
  put(use_cam, "cam");
  put(use_of, "of");
  put(use_ow, "ow");
  put(use_triplet, "triplet");
  return out.empty() ? "baseline" : out;
}

void NetworkConfig::validate() const {
  if (widths.size() != 4) throw ConfigError("backbone.widths", "expected four block widths");
  for (auto w : widths) {
    if (w == 0) throw ConfigError("backbone.widths", "widths must be positive");
  }
  if (branch_width == 0) throw ConfigError("backbone.branch_width", "must be positive");
  if (input.channels == 0 || input.height % 8 != 0 || input.width % 8 != 0 ||
      input.height == 0 || input.width == 0) {
    throw ConfigError("backbone.input_shape", "height and width must be positive multiples of 8");
  }
  if (attentive_width == 0 || attentive_width >= branch_width) {
    throw ConfigError("embedding.attentive_width", "must be positive and below the branch width");
  }
  if (k_a == 0 || k_a >= 3 * attentive_width) {
    throw ConfigError("embedding.k_a", "must be positive and below the concatenated width");
  }
  if (k_g == 0 || k_g >= branch_width) {
    throw ConfigError("embedding.k_g", "must be positive and below the branch width");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("reduction.dropout", "must be in [0, 1)");
  if (bn_momentum <= 0.0 || bn_momentum > 1.0) {
    throw ConfigError("bn.momentum", "must be in (0, 1]");
  }
  if (bn_eps <= 0.0) throw ConfigError("bn.eps", "must be positive");
}

const std::vector<std::string>& of_site_names() {
  static const std::vector<std::string> names{"cam_early", "t_a", "cam_branch", "pam_branch"};
  return names;
}

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, std::uint64_t seed) {
  Rng rng(seed);
  return random_normal(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

}  // namespace

std::size_t Network::add_param(std::string name, Tensor value, ParamGroup group) {
  params_.push_back({std::move(name), std::move(value), group, true});
  return params_.size() - 1;
}

std::size_t Network::add_buffer(std::string name, Tensor value) {
  buffers_.push_back({std::move(name), std::move(value)});
  return buffers_.size() - 1;
}

Network::BnLayer Network::add_bn(const std::string& prefix, std::size_t channels,
                                 ParamGroup group) {
  BnLayer l{};
  l.gamma = add_param(prefix + ".bn.gamma", Tensor({channels}, 1.0), group);
  l.beta = add_param(prefix + ".bn.beta", Tensor({channels}, 0.0), group);
  l.mean = add_buffer(prefix + ".bn.running_mean", Tensor({channels}, 0.0));
  l.var = add_buffer(prefix + ".bn.running_var", Tensor({channels}, 1.0));
  return l;
}

Network::ConvBlock Network::add_conv_block(const std::string& prefix, std::size_t in,
                                           std::size_t out, std::size_t k, bool pool,
                                           ParamGroup group, std::uint64_t seed) {
  ConvBlock b{};
  b.weight = add_param(prefix + ".conv.weight",
                       he_normal({out, in, k, k}, in * k * k, derive_seed(seed, prefix)), group);
  b.bn = add_bn(prefix, out, group);
  b.pool = pool;
  return b;
}

Network::Network(const NetworkConfig& config, std::size_t num_classes, std::uint64_t seed)
    : config_(config), num_classes_(num_classes) {
  config_.validate();
  if (num_classes < 2) throw ContractError("network needs at least two classes");
  const auto bb = ParamGroup::kBackbone;
  const auto hd = ParamGroup::kHead;
  std::size_t in = config_.input.channels;
  for (std::size_t i = 0; i < 4; ++i) {
    blocks_[i] = add_conv_block("block" + std::to_string(i + 1), in, config_.widths[i], 3, i < 3,
                                bb, seed);
    ow_params_.push_back(blocks_[i].weight);
    in = config_.widths[i];
  }
  cam_early_gamma_ = add_param("cam_early.gamma", Tensor::scalar(0.0), hd);
  block5a_ = add_conv_block("block5a", in, config_.branch_width, 3, false, bb, seed);
  block5g_ = add_conv_block("block5g", in, config_.branch_width, 3, false, bb, seed);
  ow_params_.push_back(block5a_.weight);
  ow_params_.push_back(block5g_.weight);

  const std::size_t ta = config_.attentive_width;
  reduce_a_ = add_conv_block("reduce_a", config_.branch_width, ta, 1, false, hd, seed);
  cam_gamma_ = add_param("cam_branch.gamma", Tensor::scalar(0.0), hd);
  pam_gamma_ = add_param("pam_branch.gamma", Tensor::scalar(0.0), hd);
  const char* head_names[3] = {"pam_branch.query", "pam_branch.key", "pam_branch.value"};
  for (int h = 0; h < 3; ++h) {
    pam_heads_[h] = add_conv_block(head_names[h], ta, ta, 1, false, hd, seed);
  }
  reduce_post_ = add_conv_block("reduce_post", 3 * ta, config_.k_a, 1, false, hd, seed);
  reduce_g_weight_ =
      add_param("reduce_g.linear.weight",
                he_normal({config_.k_g, config_.branch_width}, config_.branch_width,
                          derive_seed(seed, "reduce_g")),
                hd);
  reduce_g_bn_ = add_bn("reduce_g", config_.k_g, hd);
  {
    Rng rng(derive_seed(seed, "classifier"));
    classifier_weight_ = add_param("classifier.weight",
                                   random_normal({num_classes, config_.embedding_dim()}, rng, 0.01),
                                   hd);
  }
  classifier_bias_ = add_param("classifier.bias", Tensor({num_classes}, 0.0), hd);

  if (config_.freeze_gamma) {
    for (auto g : {cam_early_gamma_, cam_gamma_, pam_gamma_}) params_[g].trainable = false;
  }
}

std::size_t Network::parameter_index(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw ContractError("no parameter named " + std::string(name));
}

std::size_t Network::buffer_index(std::string_view name) const {
  for (std::size_t i = 0; i < buffers_.size(); ++i) {
    if (buffers_[i].name == name) return i;
  }
  throw ContractError("no buffer named " + std::string(name));
}

struct Network::Context {
  ad::Tape& tape;
  const ForwardOptions& options;
  std::vector<ad::Var> vars;
  bool training;
  int dropout_sites = 0;
};

ad::Var Network::bn(Context& ctx, ad::Var x, const BnLayer& layer) {
  const ad::BatchNormStats running{buffers_[layer.mean].value, buffers_[layer.var].value};
  ad::BatchNormStats batch;
  ad::Var y = ad::batch_norm(x, ctx.vars[layer.gamma], ctx.vars[layer.beta], config_.bn_eps,
                             ctx.training, &running, &batch);
  if (ctx.training) {
    const Shape& s = x.shape();
    double count = static_cast<double>(s[0]);
    for (std::size_t d = 2; d < s.size(); ++d) count *= static_cast<double>(s[d]);
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    const double m = config_.bn_momentum;
    Tensor& rm = buffers_[layer.mean].value;
    Tensor& rv = buffers_[layer.var].value;
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = (1.0 - m) * rm[c] + m * batch.mean[c];
      rv[c] = (1.0 - m) * rv[c] + m * batch.var[c] * unbias;
    }
  }
  return y;
}

ad::Var Network::conv_block(Context& ctx, ad::Var x, const ConvBlock& block, std::size_t pad) {
  ad::Var y = ad::relu(bn(ctx, ad::conv2d(x, ctx.vars[block.weight], pad), block.bn));
  return block.pool ? ad::max_pool2x2(y) : y;
}

ad::Var Network::dropout(Context& ctx, ad::Var x, std::string_view site) {
  if (!ctx.training || config_.dropout == 0.0) return x;
  Rng rng(derive_seed(ctx.options.step_seed, site));
  std::bernoulli_distribution keep(1.0 - config_.dropout);
  const double scale = 1.0 / (1.0 - config_.dropout);
  Tensor mask(x.shape());
  for (auto& m : mask.data()) m = keep(rng) ? scale : 0.0;
  return ad::mul(x, ctx.tape.constant(std::move(mask)));
}

ForwardResult Network::forward(ad::Tape& tape, const Tensor& images,
                               const ForwardOptions& options) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != config_.input.channels || s[2] != config_.input.height ||
      s[3] != config_.input.width) {
    throw DimensionError("network input must be N x " + std::to_string(config_.input.channels) +
                         " x " + std::to_string(config_.input.height) + " x " +
                         std::to_string(config_.input.width) + ", got " + shape_to_string(s));
  }
  Context ctx{tape, options, {}, options.mode == Mode::kTrain};
  ctx.vars.reserve(params_.size());
  for (const auto& p : params_) {
    const bool grad =
        p.trainable && (p.group == ParamGroup::kHead || options.train_backbone);
    ctx.vars.push_back(tape.leaf(p.value, grad));
  }
  const VariantSpec& v = options.variant;
  ForwardResult out;

  ad::Var x = tape.constant(images);
  x = conv_block(ctx, x, blocks_[0], 1);
  x = conv_block(ctx, x, blocks_[1], 1);
  if (v.use_cam) x = attention_ops::cam(x, ctx.vars[cam_early_gamma_]);
  out.sites["cam_early"] = x;
  x = conv_block(ctx, x, blocks_[2], 1);
  x = conv_block(ctx, x, blocks_[3], 1);

  // Attentive branch.
  ad::Var a = conv_block(ctx, x, block5a_, 1);
  ad::Var ta = dropout(ctx, conv_block(ctx, a, reduce_a_, 0), "dropout:reduce_a");
  out.sites["t_a"] = ta;
  ad::Var cam_out = v.use_cam ? attention_ops::cam(ta, ctx.vars[cam_gamma_]) : ta;
  out.sites["cam_branch"] = cam_out;
  ad::Var pam_out = ta;
  if (v.use_pam) {
    ad::BatchNormStats running[3], batch[3];
    attention_ops::HeadVars heads[3];
    for (int h = 0; h < 3; ++h) {
      const ConvBlock& hb = pam_heads_[h];
      running[h] = {buffers_[hb.bn.mean].value, buffers_[hb.bn.var].value};
      heads[h] = {ctx.vars[hb.weight], ctx.vars[hb.bn.gamma], ctx.vars[hb.bn.beta], &running[h],
                  &batch[h]};
    }
    attention_ops::PamVars pv{ctx.vars[pam_gamma_], heads[0], heads[1], heads[2], config_.bn_eps};
    pam_out = attention_ops::pam(ta, pv, ctx.training).out;
    if (ctx.training) {
      const Shape& ts = ta.shape();
      const double count = static_cast<double>(ts[0] * ts[2] * ts[3]);
      const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
      const double m = config_.bn_momentum;
      for (int h = 0; h < 3; ++h) {
        Tensor& rm = buffers_[pam_heads_[h].bn.mean].value;
        Tensor& rv = buffers_[pam_heads_[h].bn.var].value;
        for (std::size_t c = 0; c < rm.size(); ++c) {
          rm[c] = (1.0 - m) * rm[c] + m * batch[h].mean[c];
          rv[c] = (1.0 - m) * rv[c] + m * batch[h].var[c] * unbias;
        }
      }
    }
  }
  out.sites["pam_branch"] = pam_out;
  const ad::Var parts[3] = {ta, cam_out, pam_out};
  ad::Var post = dropout(ctx, conv_block(ctx, ad::concat(parts, 1), reduce_post_, 0),
                         "dropout:reduce_post");
  out.sites["attentive_final"] = post;
  ad::Var attentive = ad::global_avg_pool(post);

  // Global branch.
  ad::Var g = ad::global_avg_pool(conv_block(ctx, x, block5g_, 1));
  ad::Var tg = ad::relu(
      bn(ctx, ad::matmul(g, ad::transpose(ctx.vars[reduce_g_weight_])), reduce_g_bn_));
  tg = dropout(ctx, tg, "dropout:reduce_g");
  out.sites["t_g"] = tg;

  const ad::Var emb_parts[2] = {attentive, tg};
  out.embedding = ad::concat(emb_parts, 1);
  out.logits = ad::add_bias(ad::matmul(out.embedding, ad::transpose(ctx.vars[classifier_weight_])),
                            ctx.vars[classifier_bias_]);
  out.params = std::move(ctx.vars);
  return out;
}

Tensor Network::embed(const Tensor& images, const VariantSpec& variant) {
  ad::Tape tape;
  ForwardOptions opts;
  opts.mode = Mode::kEval;
  opts.variant = variant;
  opts.train_backbone = false;
  return forward(tape, images, opts).embedding.value();
}

ad::Var Network::of_penalty(const ForwardResult& fwd, const SvdoConfig& cfg,
                            Reduction reduction) const {
  ad::Var total;
  for (const auto& name : of_site_names()) {
    SvdoConfig c = cfg;
    c.seed = derive_seed(cfg.seed, name);
    ad::Var p = divattn::of_penalty(fwd.sites.at(name), c, reduction);
    total = total.valid() ? ad::add(total, p) : p;
  }
  return total;
}

ad::Var Network::ow_penalty(const ForwardResult& fwd, const SvdoConfig& cfg,
                            Reduction reduction) const {
  std::vector<ad::Var> views;
  views.reserve(ow_params_.size());
  for (auto i : ow_params_) views.push_back(weight_matrix_view(fwd.params.at(i)));
  return divattn::ow_penalty(views, cfg, reduction);
}

}  // namespace divattn
