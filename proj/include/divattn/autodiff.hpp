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

// Tape-based reverse-mode differentiation over tensor operations.
//
// Every operation appends a TapeNode holding its op-kind, the ids of its
// inputs, its forward value and whatever it needs for the backward rule.
// Inputs always precede the node, so a single reverse sweep over the tape
// is a valid topological order. A node only requires a gradient when one of
// its inputs does; backward skips the rest.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "divattn/tensor.hpp"

namespace divattn::ad {

enum class OpKind : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kScaleBy,
  kAddScalar,
  kMatmul,
  kTranspose,
  kReshape,
  kRelu,
  kSoftmaxRows,
  kSum,
  kMean,
  kNorm,
  kSquare,
  kSqrt,
  kConcat,
  kSelect,
  kConv2d,
  kMaxPool2x2,
  kGlobalAvgPool,
  kBatchNorm,
  kAddBias,
  kCrossEntropy,
  kPairwiseDistance,
  kGather,
};

std::string_view op_name(OpKind kind);

struct TapeNode {
  OpKind kind = OpKind::kLeaf;
  std::vector<std::size_t> inputs;
  Tensor value;
  // Forward values cached for the backward rule, beyond the input values.
  std::vector<Tensor> saved;
  std::vector<std::size_t> indices;
  double attr = 0.0;
  bool requires_grad = false;
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Node id -> gradient. Absent entries mean zero gradient.
class GradientMap {
 public:
  GradientMap() = default;
  explicit GradientMap(std::vector<std::optional<Tensor>> grads) : grads_(std::move(grads)) {}

  bool contains(Var v) const { return v.id() < grads_.size() && grads_[v.id()].has_value(); }
  const Tensor* find(Var v) const { return contains(v) ? &*grads_[v.id()] : nullptr; }
  /// Gradient of `v`, or zeros shaped like its value when absent.
  Tensor at(Var v) const;

 private:
  std::vector<std::optional<Tensor>> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends a node. Its inputs must already be on this tape.
  Var record(TapeNode node);

  const TapeNode& node(std::size_t id) const { return nodes_.at(id); }
  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<TapeNode> nodes_;
};

/// d loss / d node for every node upstream of `loss` that requires a
/// gradient. Throws ContractError for a non-scalar loss and
/// UnsupportedOpError for a node kind without a backward rule.
GradientMap backward(const Tape& tape, Var loss);

// Elementwise, same shape only.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
/// a * s where s is a single-element node.
Var scale_by(Var a, Var s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var square(Var a);
/// sqrt(max(a, floor)); zero gradient where the floor is active.
Var sqrt_floor(Var a, double floor);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var softmax_rows(Var a);

Var sum(Var a);
Var mean(Var a);
/// Euclidean norm of all entries. The backward divides by max(norm, 1e-12).
Var norm(Var a);

Var concat(std::span<const Var> parts, std::size_t axis);
/// Element `index` along axis 0, leading axis dropped.
Var select(Var a, std::size_t index);
/// Flat entries of `a` at `positions`, as a vector.
Var gather(Var a, std::vector<std::size_t> positions);

Var conv2d(Var x, Var w, std::size_t pad);
Var max_pool2x2(Var x);
Var global_avg_pool(Var x);

struct BatchNormStats {
  Tensor mean;
  Tensor var;  // biased
};

/// Per-channel batch normalization of N x C or N x C x H x W input.
/// Training mode normalizes with batch statistics and reports them through
/// `stats`; evaluation mode uses `running`.
Var batch_norm(Var x, Var gamma, Var beta, double eps, bool training,
               const BatchNormStats* running, BatchNormStats* stats);

/// x (N x D) plus the bias row b (D) added to every row.
Var add_bias(Var x, Var b);

/// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);

/// N x D -> N x N Euclidean distances, sqrt(max(squared, floor)).
Var pairwise_distance(Var x, double floor);

struct GradCheckResult {
  double max_rel_error = 0.0;
  Tensor analytic;
  Tensor numeric;
};

/// Central-difference check of the tape gradient of the scalar `f` at `x`.
/// Relative error per coordinate uses max(|analytic|, |numeric|, 1e-8) as
/// denominator. Throws OracleFailure when f is not finite.
GradCheckResult finite_diff_check(const std::function<Var(Var)>& f, const Tensor& x,
                                  double h = 1e-5);

}  // namespace divattn::ad
