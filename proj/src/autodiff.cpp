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

#include "divattn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "divattn/errors.hpp"

namespace divattn::ad {

namespace {

constexpr double kNormGuard = 1e-12;

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError("operands live on different tapes");
  }
  return a.tape();
}

Var unary(OpKind kind, Var a, Tensor value, double attr = 0.0,
          std::vector<std::size_t> indices = {}) {
  TapeNode n;
  n.kind = kind;
  n.inputs = {a.id()};
  n.value = std::move(value);
  n.attr = attr;
  n.indices = std::move(indices);
  return a.tape().record(std::move(n));
}

Var binary(OpKind kind, Var a, Var b, Tensor value, std::vector<std::size_t> indices = {}) {
  Tape& t = same_tape(a, b);
  TapeNode n;
  n.kind = kind;
  n.inputs = {a.id(), b.id()};
  n.value = std::move(value);
  n.indices = std::move(indices);
  return t.record(std::move(n));
}

void accumulate(std::optional<Tensor>& slot, Tensor&& g) {
  if (!slot) {
    slot = std::move(g);
    return;
  }
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Channel index helpers for N x C (x spatial) tensors.
std::size_t spatial_extent(const Shape& s) { return s.size() == 4 ? s[2] * s[3] : 1; }

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kScale: return "scale";
    case OpKind::kScaleBy: return "scale_by";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kReshape: return "reshape";
    case OpKind::kRelu: return "relu";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kNorm: return "norm";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kConcat: return "concat";
    case OpKind::kSelect: return "select";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kMaxPool2x2: return "max_pool2x2";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kPairwiseDistance: return "pairwise_distance";
    case OpKind::kGather: return "gather";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(*this); }

Tensor GradientMap::at(Var v) const {
  if (const Tensor* g = find(v)) return *g;
  return Tensor(v.shape());
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  TapeNode n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(TapeNode node) {
  const std::size_t id = nodes_.size();
  bool needs = false;
  for (auto in : node.inputs) {
    if (in >= id) throw ContractError("tape input does not precede its node");
    needs = needs || nodes_[in].requires_grad;
  }
  node.requires_grad = needs;
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

// ---------------------------------------------------------------------------
// Forward constructors

Var add(Var a, Var b) { return binary(OpKind::kAdd, a, b, divattn::add(a.value(), b.value())); }
Var sub(Var a, Var b) { return binary(OpKind::kSub, a, b, divattn::sub(a.value(), b.value())); }
Var mul(Var a, Var b) { return binary(OpKind::kMul, a, b, divattn::mul(a.value(), b.value())); }

Var div(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) throw DimensionError("div: shape mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / y[i];
  return binary(OpKind::kDiv, a, b, std::move(out));
}

Var scale(Var a, double s) { return unary(OpKind::kScale, a, divattn::scale(a.value(), s), s); }

Var scale_by(Var a, Var s) {
  if (s.value().size() != 1) throw DimensionError("scale_by: scale must hold one value");
  return binary(OpKind::kScaleBy, a, s, divattn::scale(a.value(), s.value()[0]));
}

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += s;
  return unary(OpKind::kAddScalar, a, std::move(out));
}

Var relu(Var a) { return unary(OpKind::kRelu, a, divattn::relu(a.value())); }

Var square(Var a) { return unary(OpKind::kSquare, a, divattn::mul(a.value(), a.value())); }

Var sqrt_floor(Var a, double floor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = std::sqrt(std::max(v, floor));
  return unary(OpKind::kSqrt, a, std::move(out), floor);
}

Var matmul(Var a, Var b) {
  return binary(OpKind::kMatmul, a, b, divattn::matmul(a.value(), b.value()));
}

Var transpose(Var a) { return unary(OpKind::kTranspose, a, divattn::transpose(a.value())); }

Var reshape(Var a, Shape shape) {
  return unary(OpKind::kReshape, a, a.value().reshaped(std::move(shape)));
}

Var softmax_rows(Var a) {
  return unary(OpKind::kSoftmaxRows, a, divattn::softmax_rows(a.value()));
}

Var sum(Var a) { return unary(OpKind::kSum, a, Tensor::scalar(divattn::sum(a.value()))); }

Var mean(Var a) {
  return unary(OpKind::kMean, a,
               Tensor::scalar(divattn::sum(a.value()) / static_cast<double>(a.value().size())));
}

Var norm(Var a) { return unary(OpKind::kNorm, a, Tensor::scalar(frobenius_norm(a.value()))); }

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range");
  std::size_t total = 0;
  TapeNode n;
  n.kind = OpKind::kConcat;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != ref.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != ref[d]) throw DimensionError("concat: shape mismatch");
    }
    total += s[axis];
    n.inputs.push_back(p.id());
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  Shape shape = ref;
  shape[axis] = total;
  Tensor out(shape);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t chunk = p.shape()[axis] * inner;
    const Tensor& v = p.value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data().begin() + o * chunk, chunk,
                  out.data().begin() + o * total * inner + offset);
    }
    offset += chunk;
  }
  n.value = std::move(out);
  n.indices = {axis};
  return parts[0].tape().record(std::move(n));
}

Var select(Var a, std::size_t index) {
  return unary(OpKind::kSelect, a, batch_item(a.value(), index), 0.0, {index});
}

Var gather(Var a, std::vector<std::size_t> positions) {
  if (positions.empty()) throw DimensionError("gather: no positions");
  const Tensor& x = a.value();
  Tensor out({positions.size()});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] >= x.size()) throw DimensionError("gather: position out of range");
    out[i] = x[positions[i]];
  }
  return unary(OpKind::kGather, a, std::move(out), 0.0, std::move(positions));
}

Var conv2d(Var x, Var w, std::size_t pad) {
  return binary(OpKind::kConv2d, x, w, kernels::conv2d(x.value(), w.value(), pad), {pad});
}

Var max_pool2x2(Var x) {
  std::vector<std::size_t> argmax;
  Tensor out = kernels::max_pool2x2(x.value(), &argmax);
  return unary(OpKind::kMaxPool2x2, x, std::move(out), 0.0, std::move(argmax));
}

Var global_avg_pool(Var x) {
  return unary(OpKind::kGlobalAvgPool, x, divattn::global_avg_pool(x.value()));
}

Var batch_norm(Var x, Var gamma, Var beta, double eps, bool training,
               const BatchNormStats* running, BatchNormStats* stats) {
  same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor& in = x.value();
  if (in.rank() != 2 && in.rank() != 4) throw DimensionError("batch_norm expects rank 2 or 4");
  const std::size_t n = in.dim(0), c = in.dim(1), s = spatial_extent(in.shape());
  if (gamma.value().size() != c || beta.value().size() != c) {
    throw DimensionError("batch_norm: parameter size vs channels");
  }
  Tensor mu({c}), var({c});
  if (training) {
    const double m = static_cast<double>(n * s);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < s; ++i) mu[ch] += in[(b * c + ch) * s + i];
    for (std::size_t ch = 0; ch < c; ++ch) mu[ch] /= m;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < s; ++i) {
          const double d = in[(b * c + ch) * s + i] - mu[ch];
          var[ch] += d * d;
        }
    for (std::size_t ch = 0; ch < c; ++ch) var[ch] /= m;
    if (stats) *stats = {mu, var};
  } else {
    if (!running) throw ContractError("batch_norm: evaluation mode needs running statistics");
    mu = running->mean;
    var = running->var;
  }
  Tensor invstd({c});
  for (std::size_t ch = 0; ch < c; ++ch) invstd[ch] = 1.0 / std::sqrt(var[ch] + eps);
  Tensor xhat(in.shape()), out(in.shape());
  const Tensor& g = gamma.value();
  const Tensor& bt = beta.value();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < s; ++i) {
        const std::size_t idx = (b * c + ch) * s + i;
        xhat[idx] = (in[idx] - mu[ch]) * invstd[ch];
        out[idx] = xhat[idx] * g[ch] + bt[ch];
      }
  TapeNode node;
  node.kind = OpKind::kBatchNorm;
  node.inputs = {x.id(), gamma.id(), beta.id()};
  node.value = std::move(out);
  node.saved = {std::move(xhat), std::move(invstd)};
  node.indices = {training ? 1u : 0u};
  node.attr = eps;
  return x.tape().record(std::move(node));
}

Var add_bias(Var x, Var b) {
  const Tensor& in = x.value();
  if (in.rank() != 2 || b.value().rank() != 1 || b.value().dim(0) != in.dim(1)) {
    throw DimensionError("add_bias: expects N x D and D");
  }
  Tensor out = in;
  const std::size_t d = in.dim(1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i % d];
  return binary(OpKind::kAddBias, x, b, std::move(out));
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw DimensionError("cross_entropy expects N x K logits");
  const auto [n, k] = z.shape2();
  if (labels.size() != n) throw DimensionError("cross_entropy: label count vs rows");
  Tensor probs = divattn::softmax_rows(z);
  double loss = 0.0;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[i]) +
                          " out of range [0," + std::to_string(k) + ")");
    }
    idx[i] = static_cast<std::size_t>(labels[i]);
    // log-sum-exp form keeps -log p accurate when p underflows.
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) hi = std::max(hi, z.at(i, j));
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += std::exp(z.at(i, j) - hi);
    loss += hi + std::log(acc) - z.at(i, idx[i]);
  }
  TapeNode node;
  node.kind = OpKind::kCrossEntropy;
  node.inputs = {logits.id()};
  node.value = Tensor::scalar(loss / static_cast<double>(n));
  node.saved = {std::move(probs)};
  node.indices = std::move(idx);
  return logits.tape().record(std::move(node));
}

Var pairwise_distance(Var x, double floor) {
  const Tensor& e = x.value();
  if (e.rank() != 2) throw DimensionError("pairwise_distance expects N x D");
  const auto [n, d] = e.shape2();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = e.at(i, k) - e.at(j, k);
        sq += diff * diff;
      }
      out.at(i, j) = std::sqrt(std::max(sq, floor));
    }
  }
  return unary(OpKind::kPairwiseDistance, x, std::move(out), floor);
}

// ---------------------------------------------------------------------------
// Backward

GradientMap backward(const Tape& tape, Var loss) {
  if (&loss.tape() != &tape) throw ContractError("loss is not on this tape");
  const TapeNode& root = tape.node(loss.id());
  if (root.value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got " + shape_to_string(root.value.shape()));
  }
  std::vector<std::optional<Tensor>> grads(tape.size());
  if (!root.requires_grad) return GradientMap(std::move(grads));
  grads[loss.id()] = Tensor(root.value.shape(), 1.0);

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (!grads[id]) continue;
    const TapeNode& node = tape.node(id);
    if (node.kind == OpKind::kLeaf) continue;
    const Tensor& g = *grads[id];

    auto in = [&](std::size_t k) -> const TapeNode& { return tape.node(node.inputs[k]); };
    auto wants = [&](std::size_t k) { return in(k).requires_grad; };
    auto emit = [&](std::size_t k, Tensor&& t) { accumulate(grads[node.inputs[k]], std::move(t)); };

    switch (node.kind) {
      case OpKind::kAdd:
        if (wants(0)) emit(0, Tensor(g));
        if (wants(1)) emit(1, Tensor(g));
        break;
      case OpKind::kSub:
        if (wants(0)) emit(0, Tensor(g));
        if (wants(1)) emit(1, divattn::scale(g, -1.0));
        break;
      case OpKind::kMul:
        if (wants(0)) emit(0, divattn::mul(g, in(1).value));
        if (wants(1)) emit(1, divattn::mul(g, in(0).value));
        break;
      case OpKind::kDiv: {
        const Tensor& a = in(0).value;
        const Tensor& b = in(1).value;
        if (wants(0)) {
          Tensor t(g.shape());
          for (std::size_t i = 0; i < t.size(); ++i) t[i] = g[i] / b[i];
          emit(0, std::move(t));
        }
        if (wants(1)) {
          Tensor t(g.shape());
          for (std::size_t i = 0; i < t.size(); ++i) t[i] = -g[i] * a[i] / (b[i] * b[i]);
          emit(1, std::move(t));
        }
        break;
      }
      case OpKind::kScale:
        if (wants(0)) emit(0, divattn::scale(g, node.attr));
        break;
      case OpKind::kScaleBy: {
        const Tensor& a = in(0).value;
        const Tensor& s = in(1).value;
        if (wants(0)) emit(0, divattn::scale(g, s[0]));
        if (wants(1)) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a[i];
          emit(1, Tensor(s.shape(), acc));
        }
        break;
      }
      case OpKind::kAddScalar:
      case OpKind::kReshape:
        if (wants(0)) emit(0, g.reshaped(in(0).value.shape()));
        break;
      case OpKind::kMatmul: {
        const Tensor& a = in(0).value;
        const Tensor& b = in(1).value;
        const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
        if (wants(0)) {
          Tensor t({m, k});
          kernels::gemm_nt(m, k, n, g.data().data(), b.data().data(), t.data().data());
          emit(0, std::move(t));
        }
        if (wants(1)) {
          Tensor t({k, n});
          kernels::gemm_tn(k, n, m, a.data().data(), g.data().data(), t.data().data());
          emit(1, std::move(t));
        }
        break;
      }
      case OpKind::kTranspose:
        if (wants(0)) emit(0, divattn::transpose(g));
        break;
      case OpKind::kRelu:
        if (wants(0)) {
          Tensor t(g.shape());
          for (std::size_t i = 0; i < t.size(); ++i) t[i] = node.value[i] > 0.0 ? g[i] : 0.0;
          emit(0, std::move(t));
        }
        break;
      case OpKind::kSoftmaxRows:
        if (wants(0)) {
          const Tensor& y = node.value;
          const auto [r, c] = y.shape2();
          Tensor t({r, c});
          for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < c; ++j) t.at(i, j) = y.at(i, j) * (g.at(i, j) - dot);
          }
          emit(0, std::move(t));
        }
        break;
      case OpKind::kSum:
        if (wants(0)) emit(0, Tensor(in(0).value.shape(), g[0]));
        break;
      case OpKind::kMean:
        if (wants(0)) {
          const double n = static_cast<double>(in(0).value.size());
          emit(0, Tensor(in(0).value.shape(), g[0] / n));
        }
        break;
      case OpKind::kNorm:
        if (wants(0)) {
          const double denom = std::max(node.value[0], kNormGuard);
          emit(0, divattn::scale(in(0).value, g[0] / denom));
        }
        break;
      case OpKind::kSquare:
        if (wants(0)) {
          Tensor t = divattn::mul(g, in(0).value);
          emit(0, divattn::scale(t, 2.0));
        }
        break;
      case OpKind::kSqrt:
        if (wants(0)) {
          const Tensor& a = in(0).value;
          Tensor t(g.shape());
          for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = a[i] > node.attr ? g[i] / (2.0 * node.value[i]) : 0.0;
          }
          emit(0, std::move(t));
        }
        break;
      case OpKind::kConcat: {
        const std::size_t axis = node.indices[0];
        const Shape& out_shape = node.value.shape();
        std::size_t outer = 1, inner = 1;
        for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
        for (std::size_t d = axis + 1; d < out_shape.size(); ++d) inner *= out_shape[d];
        const std::size_t total = out_shape[axis];
        std::size_t offset = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const Shape& s = in(k).value.shape();
          const std::size_t chunk = s[axis] * inner;
          if (wants(k)) {
            Tensor t(s);
            for (std::size_t o = 0; o < outer; ++o) {
              std::copy_n(g.data().begin() + o * total * inner + offset, chunk,
                          t.data().begin() + o * chunk);
            }
            emit(k, std::move(t));
          }
          offset += chunk;
        }
        break;
      }
      case OpKind::kSelect:
        if (wants(0)) {
          Tensor t(in(0).value.shape());
          const std::size_t n = g.size();
          std::copy(g.data().begin(), g.data().end(), t.data().begin() + node.indices[0] * n);
          emit(0, std::move(t));
        }
        break;
      case OpKind::kGather:
        if (wants(0)) {
          Tensor t(in(0).value.shape());
          for (std::size_t i = 0; i < node.indices.size(); ++i) t[node.indices[i]] += g[i];
          emit(0, std::move(t));
        }
        break;
      case OpKind::kConv2d: {
        const std::size_t pad = node.indices[0];
        if (wants(0)) emit(0, kernels::conv2d_grad_input(g, in(1).value, in(0).value.shape(), pad));
        if (wants(1)) emit(1, kernels::conv2d_grad_weight(g, in(0).value, in(1).value.shape(), pad));
        break;
      }
      case OpKind::kMaxPool2x2:
        if (wants(0)) {
          Tensor t(in(0).value.shape());
          for (std::size_t o = 0; o < node.indices.size(); ++o) t[node.indices[o]] += g[o];
          emit(0, std::move(t));
        }
        break;
      case OpKind::kGlobalAvgPool:
        if (wants(0)) {
          const Tensor& x = in(0).value;
          const std::size_t pix = x.rank() == 4 ? x.dim(2) * x.dim(3) : x.dim(1) * x.dim(2);
          Tensor t(x.shape());
          for (std::size_t i = 0; i < t.size(); ++i) t[i] = g[i / pix] / static_cast<double>(pix);
          emit(0, std::move(t));
        }
        break;
      case OpKind::kBatchNorm: {
        const Tensor& xhat = node.saved[0];
        const Tensor& invstd = node.saved[1];
        const Tensor& gamma = in(1).value;
        const Shape& s = xhat.shape();
        const std::size_t n = s[0], c = s[1], sp = spatial_extent(s);
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < sp; ++i) {
              const std::size_t idx = (b * c + ch) * sp + i;
              sum_g[ch] += g[idx];
              sum_gx[ch] += g[idx] * xhat[idx];
            }
        if (wants(0)) {
          Tensor t(s);
          const bool training = node.indices[0] == 1;
          const double m = static_cast<double>(n * sp);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t i = 0; i < sp; ++i) {
                const std::size_t idx = (b * c + ch) * sp + i;
                const double k = gamma[ch] * invstd[ch];
                t[idx] = training ? k * (g[idx] - sum_g[ch] / m - xhat[idx] * sum_gx[ch] / m)
                                  : k * g[idx];
              }
          emit(0, std::move(t));
        }
        if (wants(1)) emit(1, Tensor({c}, sum_gx));
        if (wants(2)) emit(2, Tensor({c}, sum_g));
        break;
      }
      case OpKind::kAddBias:
        if (wants(0)) emit(0, Tensor(g));
        if (wants(1)) {
          const std::size_t d = g.dim(1);
          Tensor t({d});
          for (std::size_t i = 0; i < g.size(); ++i) t[i % d] += g[i];
          emit(1, std::move(t));
        }
        break;
      case OpKind::kCrossEntropy:
        if (wants(0)) {
          Tensor t = node.saved[0];
          const std::size_t n = t.dim(0);
          for (std::size_t i = 0; i < n; ++i) t.at(i, node.indices[i]) -= 1.0;
          emit(0, divattn::scale(t, g[0] / static_cast<double>(n)));
        }
        break;
      case OpKind::kPairwiseDistance:
        if (wants(0)) {
          const Tensor& e = in(0).value;
          const auto [n, d] = e.shape2();
          Tensor t({n, d});
          const double active = std::sqrt(node.attr);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              const double dist = node.value.at(i, j);
              if (i == j || !(dist > active)) continue;
              const double w = g.at(i, j) / dist;
              for (std::size_t k = 0; k < d; ++k) {
                const double diff = e.at(i, k) - e.at(j, k);
                t.at(i, k) += w * diff;
                t.at(j, k) -= w * diff;
              }
            }
          }
          emit(0, std::move(t));
        }
        break;
      default:
        throw UnsupportedOpError("no backward rule for op-kind " +
                                 std::to_string(static_cast<int>(node.kind)));
    }
  }
  return GradientMap(std::move(grads));
}

// ---------------------------------------------------------------------------

GradCheckResult finite_diff_check(const std::function<Var(Var)>& f, const Tensor& x, double h) {
  GradCheckResult result;
  {
    Tape tape;
    Var xv = tape.leaf(x);
    Var y = f(xv);
    if (!std::isfinite(y.value().item())) throw OracleFailure("f(x) is not finite");
    result.analytic = backward(tape, y).at(xv);
  }
  result.numeric = Tensor(x.shape());
  auto eval = [&](const Tensor& at) {
    Tape tape;
    const double v = f(tape.constant(at)).value().item();
    if (!std::isfinite(v)) throw OracleFailure("f is not finite near x");
    return v;
  };
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = eval(probe);
    probe[i] = x[i] - h;
    const double down = eval(probe);
    probe[i] = x[i];
    result.numeric[i] = (up - down) / (2.0 * h);
    const double a = result.analytic[i];
    const double n = result.numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(a - n) / denom);
  }
  return result;
}

}  // namespace divattn::ad
