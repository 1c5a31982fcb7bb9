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


// Small attentive re-identification network.
//
//   block1..block4   conv3x3 -> BN -> ReLU (-> 2x2 max pool for 1..3),
//                    with channel attention after block2
//   attentive branch block5a -> reduction (T_a) -> [T_a, CAM(T_a), PAM(T_a)]
//                    -> 1x1 reduction -> global average pool
//   global branch    block5g -> global average pool -> linear reduction (T_g)
//   embedding        concat(attentive, global), classifier on top
//
// Disabled attention modules pass their input through unchanged so the
// concatenation width does not depend on the variant.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "divattn/autodiff.hpp"
#include "divattn/orthogonality.hpp"
#include "divattn/tensor.hpp"

namespace divattn {

/// Which components a training run uses.
struct VariantSpec {
  bool use_pam = false;
  bool use_cam = false;
  bool use_of = false;
  bool use_ow = false;
  bool use_triplet = false;

  /// Comma-separated subset of pam,cam,of,ow,triplet; "baseline" or "" is
  /// none of them and "full" is all of them.
  static VariantSpec parse(std::string_view text);
  std::string to_string() const;
  bool operator==(const VariantSpec&) const = default;
};

struct NetworkConfig {
  std::vector<std::size_t> widths{16, 32, 64, 128};
  std::size_t branch_width = 128;
  Shape3 input{3, 48, 16};
  /// Channels of T_a, the reduced attentive-branch map.
  std::size_t attentive_width = 64;
  std::size_t k_a = 64;
  std::size_t k_g = 64;
  double dropout = 0.5;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  bool freeze_gamma = false;

  void validate() const;
  std::size_t embedding_dim() const { return k_a + k_g; }
};

enum class ParamGroup { kBackbone, kHead };

struct Parameter {
  std::string name;
  Tensor value;
  ParamGroup group = ParamGroup::kHead;
  bool trainable = true;
};

struct Buffer {
  std::string name;
  Tensor value;
};

enum class Mode { kTrain, kEval };

struct ForwardOptions {
  Mode mode = Mode::kEval;
  VariantSpec variant;
  /// Whether backbone parameters become gradient leaves.
  bool train_backbone = true;
  /// Seeds dropout masks for this step.
  std::uint64_t step_seed = 0;
};

struct ForwardResult {
  ad::Var embedding;  // batch x (k_a + k_g)
  ad::Var logits;     // batch x classes
  /// Tape handle of every parameter, parallel to Network::parameters().
  std::vector<ad::Var> params;
  /// Named intermediate maps: cam_early, t_a, cam_branch, pam_branch,
  /// attentive_final (maps), t_g (vectors).
  std::map<std::string, ad::Var> sites;
};

/// Names of the feature maps regularized by O.F., in network order.
const std::vector<std::string>& of_site_names();

class Network {
 public:
  Network(const NetworkConfig& config, std::size_t num_classes, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  std::size_t num_classes() const { return num_classes_; }

  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }
  std::vector<Buffer>& buffers() { return buffers_; }
  std::size_t parameter_index(std::string_view name) const;
  std::size_t buffer_index(std::string_view name) const;

  /// Records the forward pass on `tape`. Training mode uses batch statistics
  /// and updates the running statistics; evaluation mode is deterministic.
  ForwardResult forward(ad::Tape& tape, const Tensor& images, const ForwardOptions& options);

  /// Evaluation-mode embeddings for an N x C x H x W batch.
  Tensor embed(const Tensor& images, const VariantSpec& variant);

  /// Indices of the conv weights covered by O.W.: the four backbone blocks
  /// and both branch blocks.
  const std::vector<std::size_t>& ow_parameters() const { return ow_params_; }

  /// Sum of O.F. penalties over the sites of a forward pass.
  ad::Var of_penalty(const ForwardResult& fwd, const SvdoConfig& cfg, Reduction reduction) const;
  /// O.W. over the registered conv weights of a forward pass.
  ad::Var ow_penalty(const ForwardResult& fwd, const SvdoConfig& cfg, Reduction reduction) const;

 private:
  struct BnLayer {
    std::size_t gamma, beta;      // parameters
    std::size_t mean, var;        // buffers
  };
  struct ConvBlock {
    std::size_t weight;
    BnLayer bn;
    bool pool;
  };

  std::size_t add_param(std::string name, Tensor value, ParamGroup group);
  std::size_t add_buffer(std::string name, Tensor value);
  BnLayer add_bn(const std::string& prefix, std::size_t channels, ParamGroup group);
  ConvBlock add_conv_block(const std::string& prefix, std::size_t in, std::size_t out,
                           std::size_t k, bool pool, ParamGroup group, std::uint64_t seed);

  struct Context;
  ad::Var bn(Context& ctx, ad::Var x, const BnLayer& layer);
  ad::Var conv_block(Context& ctx, ad::Var x, const ConvBlock& block, std::size_t pad);
  ad::Var dropout(Context& ctx, ad::Var x, std::string_view site);

  NetworkConfig config_;
  std::size_t num_classes_;
  std::vector<Parameter> params_;
  std::vector<Buffer> buffers_;
  std::vector<std::size_t> ow_params_;

  ConvBlock blocks_[4];
  std::size_t cam_early_gamma_;
  ConvBlock block5a_, block5g_;
  ConvBlock reduce_a_;
  std::size_t cam_gamma_, pam_gamma_;
  ConvBlock pam_heads_[3];
  ConvBlock reduce_post_;
  std::size_t reduce_g_weight_;
  BnLayer reduce_g_bn_;
  std::size_t classifier_weight_, classifier_bias_;
};

}  // namespace divattn
