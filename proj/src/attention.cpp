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


#include "divattn/attention.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <vector>

#include "divattn/errors.hpp"

namespace divattn {

namespace {

void audit(const Tensor& affinity) {
  auto& a = AffinityAudit::current();
  ++a.matrices;
  const auto [r, c] = affinity.shape2();
  for (std::size_t i = 0; i < r; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < c; ++j) row += affinity.at(i, j);
    a.worst_row_error = std::max(a.worst_row_error, std::abs(row - 1.0));
    assert(std::abs(row - 1.0) <= 1e-8);
  }
}

ad::Var flatten(ad::Var map) {
  const Shape& s = map.shape();
  return ad::reshape(map, {s[0], s[1] * s[2]});
}

ad::Var head_forward(ad::Var maps, const attention_ops::HeadVars& h, double eps, bool training) {
  ad::Var y = ad::conv2d(maps, h.weight, 0);
  y = ad::batch_norm(y, h.bn_gamma, h.bn_beta, eps, training, h.running, h.batch_stats);
  return ad::relu(y);
}

}  // namespace

AffinityAudit& AffinityAudit::current() {
  thread_local AffinityAudit audit;
  return audit;
}

ProjectionHead ProjectionHead::identity(std::size_t channels, double eps) {
  ProjectionHead h;
  h.weight = Tensor({channels, channels, 1, 1});
  for (std::size_t c = 0; c < channels; ++c) h.weight[c * channels + c] = 1.0;
  h.bn_gamma = Tensor({channels}, 1.0);
  h.bn_beta = Tensor({channels}, 0.0);
  h.running_mean = Tensor({channels}, 0.0);
  // (x - 0) / sqrt((1 - eps) + eps) == x
  h.running_var = Tensor({channels}, 1.0 - eps);
  return h;
}

namespace attention_ops {

ad::Var channel_affinity(ad::Var flat) {
  if (flat.value().rank() != 2) throw DimensionError("channel_affinity expects C x N");
  ad::Var x = ad::softmax_rows(ad::matmul(flat, ad::transpose(flat)));
  audit(x.value());
  return x;
}

ad::Var pixel_affinity(ad::Var b_flat, ad::Var c_flat) {
  if (b_flat.shape() != c_flat.shape() || b_flat.value().rank() != 2) {
    throw DimensionError("pixel_affinity: B and C must share a C x N shape");
  }
  ad::Var s = ad::softmax_rows(ad::matmul(ad::transpose(b_flat), c_flat));
  audit(s.value());
  return s;
}

namespace {

ad::Var cam_single(ad::Var map, ad::Var gamma) {
  const Shape s = map.shape();
  ad::Var f = flatten(map);
  ad::Var x = channel_affinity(f);
  ad::Var mixed = ad::reshape(ad::matmul(x, f), s);
  return ad::add(ad::scale_by(mixed, gamma), map);
}

}  // namespace

ad::Var cam(ad::Var maps, ad::Var gamma) {
  const Shape& s = maps.shape();
  if (s.size() == 3) return cam_single(maps, gamma);
  if (s.size() != 4) throw DimensionError("cam expects C x H x W or N x C x H x W");
  std::vector<ad::Var> outs;
  outs.reserve(s[0]);
  for (std::size_t b = 0; b < s[0]; ++b) {
    ad::Var e = cam_single(ad::select(maps, b), gamma);
    outs.push_back(ad::reshape(e, {1, s[1], s[2], s[3]}));
  }
  return ad::concat(outs, 0);
}

ad::Var pam_aggregate(ad::Var a, ad::Var d, ad::Var affinity, ad::Var gamma) {
  const Shape s = a.shape();
  if (d.shape() != s) throw DimensionError("pam_aggregate: D and A shapes differ");
  ad::Var mixed = ad::reshape(ad::matmul(flatten(d), ad::transpose(affinity)), s);
  return ad::add(ad::scale_by(mixed, gamma), a);
}

PamOutput pam(ad::Var maps, const PamVars& vars, bool training) {
  const Shape s = maps.shape();
  if (s.size() != 4) throw DimensionError("pam expects N x C x H x W");
  PamOutput out;
  out.b = head_forward(maps, vars.query, vars.eps, training);
  out.c = head_forward(maps, vars.key, vars.eps, training);
  out.d = head_forward(maps, vars.value, vars.eps, training);
  if (out.b.shape() != s) throw DimensionError("pam heads must preserve the channel count");
  std::vector<ad::Var> outs;
  outs.reserve(s[0]);
  for (std::size_t i = 0; i < s[0]; ++i) {
    ad::Var a = ad::select(maps, i);
    ad::Var aff = pixel_affinity(flatten(ad::select(out.b, i)), flatten(ad::select(out.c, i)));
    ad::Var e = pam_aggregate(a, ad::select(out.d, i), aff, vars.gamma);
    outs.push_back(ad::reshape(e, {1, s[1], s[2], s[3]}));
  }
  out.out = ad::concat(outs, 0);
  return out;
}

}  // namespace attention_ops

AffinityMatrix channel_affinity(const Tensor& a) {
  if (a.rank() != 3) throw DimensionError("channel_affinity expects C x H x W");
  ad::Tape tape;
  return {attention_ops::channel_affinity(tape.constant(flatten_spatial(a))).value(),
          AffinityKind::kChannel};
}

Tensor cam_forward(const Tensor& a, const CamParams& params) {
  if (a.rank() != 3) throw DimensionError("cam_forward expects C x H x W");
  ad::Tape tape;
  return attention_ops::cam(tape.constant(a), tape.constant(Tensor::scalar(params.gamma))).value();
}

AffinityMatrix pixel_affinity(const Tensor& b, const Tensor& c) {
  if (b.rank() != 3 || b.shape() != c.shape()) {
    throw DimensionError("pixel_affinity: B and C must share a C x H x W shape");
  }
  ad::Tape tape;
  return {attention_ops::pixel_affinity(tape.constant(flatten_spatial(b)),
                                        tape.constant(flatten_spatial(c)))
              .value(),
          AffinityKind::kPixel};
}

Tensor pam_forward(const Tensor& a, const PamParams& params, PamTrace* trace) {
  if (a.rank() != 3) throw DimensionError("pam_forward expects C x H x W");
  ad::Tape tape;
  auto head = [&](const ProjectionHead& h, ad::BatchNormStats& running) {
    running = {h.running_mean, h.running_var};
    return attention_ops::HeadVars{tape.constant(h.weight), tape.constant(h.bn_gamma),
                                   tape.constant(h.bn_beta), &running, nullptr};
  };
  ad::BatchNormStats rq, rk, rv;
  attention_ops::PamVars vars{tape.constant(Tensor::scalar(params.gamma)),
                              head(params.query, rq), head(params.key, rk),
                              head(params.value, rv), params.eps};
  const Shape s = a.shape();
  ad::Var batch = tape.constant(a.reshaped({1, s[0], s[1], s[2]}));
  auto out = attention_ops::pam(batch, vars, false);
  if (trace) {
    trace->b = batch_item(out.b.value(), 0);
    trace->c = batch_item(out.c.value(), 0);
    trace->d = batch_item(out.d.value(), 0);
    trace->affinity = pixel_affinity(trace->b, trace->c);
  }
  return batch_item(out.out.value(), 0);
}

}  // namespace divattn
