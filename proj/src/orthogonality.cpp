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


#include "divattn/orthogonality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "divattn/errors.hpp"
#include "divattn/rng.hpp"

namespace divattn {

namespace {

constexpr double kDegenerateNorm = 1e-12;
constexpr std::size_t kMaxOracleSize = 256;

ad::Var zero_scalar(ad::Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

}  // namespace

void SvdoConfig::validate() const {
  if (!(beta >= 0.0)) throw ContractError("svdo beta must be >= 0");
  if (iterations < 1) throw ContractError("svdo iterations must be >= 1");
}

PowerIterState init_power_iter(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PowerIterState state;
  Tensor q = random_normal({n, 1}, rng);
  double nq = frobenius_norm(q);
  while (nq == 0.0) {
    q = random_normal({n, 1}, rng);
    nq = frobenius_norm(q);
  }
  state.q = scale(q, 1.0 / nq);
  state.p = Tensor({n, 1});
  return state;
}

Tensor gram(const Tensor& f) {
  if (f.rank() != 2) throw DimensionError("gram expects a matrix");
  const auto [r, c] = f.shape2();
  Tensor out({r, r});
  kernels::gemm_nt(r, r, c, f.data().data(), f.data().data(), out.data().data());
  // Mirror the upper triangle so the result is exactly symmetric.
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < i; ++j) out.at(i, j) = out.at(j, i);
  return out;
}

namespace ad_ops {

LambdaVar power_iter_lambda(const LinearMap& apply, ad::Var q0, int iterations) {
  if (iterations < 1) throw ContractError("power iteration needs >= 1 round");
  ad::Tape& tape = q0.tape();
  ad::Var one = tape.constant(Tensor::scalar(1.0));
  ad::Var q = q0;
  LambdaVar out;
  for (int it = 0; it < iterations; ++it) {
    if (it > 0) {
      // |X^2 q| / |X q| does not depend on the scale of q; rescaling between
      // rounds only keeps long runs inside the double range.
      q = ad::scale_by(q, ad::div(one, ad::norm(q)));
    }
    ad::Var p = apply(q);
    ad::Var np = ad::norm(p);
    if (np.value().item() < kDegenerateNorm) {
      return {zero_scalar(tape), true};
    }
    q = apply(p);
    out.value = ad::div(ad::norm(q), np);
  }
  return out;
}

SvdoVars svdo(ad::Var f, const SvdoConfig& cfg) {
  cfg.validate();
  if (f.value().rank() != 2) throw DimensionError("svdo expects a rows x cols matrix");
  ad::Tape& tape = f.tape();
  const std::size_t rows = f.value().dim(0);
  ad::Var ft = ad::transpose(f);
  auto gram_apply = [&](ad::Var q) { return ad::matmul(f, ad::matmul(ft, q)); };
  ad::Var q0 = tape.constant(init_power_iter(rows, cfg.seed).q);

  SvdoVars out;
  LambdaVar top = power_iter_lambda(gram_apply, q0, cfg.iterations);
  out.lambda_max = top.value;
  if (top.degenerate) {
    out.lambda_min = top.value;
    out.penalty = zero_scalar(tape);
    out.degenerate = true;
    return out;
  }
  auto shifted_apply = [&](ad::Var q) {
    return ad::sub(gram_apply(q), ad::scale_by(q, top.value));
  };
  LambdaVar gap = power_iter_lambda(shifted_apply, q0, cfg.iterations);
  if (gap.degenerate) {
    // F F^T is (numerically) a multiple of the identity.
    out.lambda_min = top.value;
    out.penalty = zero_scalar(tape);
    return out;
  }
  out.lambda_min = ad::sub(top.value, gap.value);
  out.penalty = ad::scale(ad::square(gap.value), cfg.beta);
  return out;
}

}  // namespace ad_ops

double power_iter_lambda(const Tensor& x, const SvdoConfig& cfg, PowerIterState& state) {
  cfg.validate();
  if (x.rank() != 2 || x.dim(0) != x.dim(1)) throw DimensionError("power iteration needs a square matrix");
  if (state.q.rank() != 2 || state.q.dim(0) != x.dim(0) || state.q.dim(1) != 1) {
    throw DimensionError("power iteration state does not match matrix size");
  }
  if (frobenius_norm(state.q) == 0.0) throw ContractError("power iteration start vector is zero");
  Tensor q = state.q;
  for (int it = 0; it < cfg.iterations; ++it) {
    if (it > 0) q = scale(q, 1.0 / frobenius_norm(q));
    Tensor p = matmul(x, q);
    const double np = frobenius_norm(p);
    if (np < kDegenerateNorm) {
      state.p = std::move(p);
      state.q = std::move(q);
      state.lambda = 0.0;
      state.degenerate = true;
      return 0.0;
    }
    q = matmul(x, p);
    state.p = std::move(p);
    state.lambda = frobenius_norm(q) / np;
  }
  state.q = std::move(q);
  state.degenerate = false;
  return state.lambda;
}

ad::Var svdo_penalty(ad::Var f, const SvdoConfig& cfg) { return ad_ops::svdo(f, cfg).penalty; }

SvdoEstimate svdo_estimate(const Tensor& f, const SvdoConfig& cfg) {
  ad::Tape tape;
  auto vars = ad_ops::svdo(tape.constant(f), cfg);
  return {vars.lambda_max.value().item(), vars.lambda_min.value().item(),
          vars.penalty.value().item(), vars.degenerate};
}

double svdo_penalty(const Tensor& f, const SvdoConfig& cfg) {
  return svdo_estimate(f, cfg).penalty;
}

ad::Var of_penalty(ad::Var feature_maps, const SvdoConfig& cfg, Reduction reduction) {
  const Shape& s = feature_maps.shape();
  if (s.size() == 3) {
    return svdo_penalty(ad::reshape(feature_maps, {s[0], s[1] * s[2]}), cfg);
  }
  if (s.size() != 4) throw DimensionError("of_penalty expects C x H x W or N x C x H x W");
  std::vector<ad::Var> terms;
  terms.reserve(s[0]);
  for (std::size_t b = 0; b < s[0]; ++b) {
    ad::Var f = ad::reshape(ad::select(feature_maps, b), {s[1], s[2] * s[3]});
    terms.push_back(ad::reshape(svdo_penalty(f, cfg), {1}));
  }
  ad::Var all = ad::concat(terms, 0);
  return reduction == Reduction::kMean ? ad::mean(all) : ad::sum(all);
}

double of_penalty(const Tensor& feature_maps, const SvdoConfig& cfg, Reduction reduction) {
  ad::Tape tape;
  return of_penalty(tape.constant(feature_maps), cfg, reduction).value().item();
}

WeightMatrixView weight_matrix_view(const Tensor& conv_weight) {
  ad::Tape tape;
  return {conv_weight.shape(), weight_matrix_view(tape.constant(conv_weight)).value()};
}

ad::Var weight_matrix_view(ad::Var conv_weight) {
  const Shape& s = conv_weight.shape();
  if (s.size() != 4) throw DimensionError("weight view expects M x C x k x k");
  return ad::transpose(ad::reshape(conv_weight, {s[0], s[1] * s[2] * s[3]}));
}

ad::Var ow_penalty(std::span<const ad::Var> weight_views, const SvdoConfig& cfg,
                   Reduction reduction) {
  if (weight_views.empty()) throw ContractError("ow_penalty: no registered weights");
  std::vector<ad::Var> terms;
  for (const auto& w : weight_views) terms.push_back(ad::reshape(svdo_penalty(w, cfg), {1}));
  ad::Var all = ad::concat(terms, 0);
  return reduction == Reduction::kMean ? ad::mean(all) : ad::sum(all);
}

double ow_penalty(std::span<const WeightMatrixView> weights, const SvdoConfig& cfg,
                  Reduction reduction) {
  ad::Tape tape;
  std::vector<ad::Var> views;
  for (const auto& w : weights) views.push_back(tape.constant(w.matrix));
  return ow_penalty(views, cfg, reduction).value().item();
}

std::vector<double> symmetric_eigenvalues(const Tensor& x) {
  if (x.rank() != 2 || x.dim(0) != x.dim(1)) throw DimensionError("eigenvalues need a square matrix");
  const std::size_t n = x.dim(0);
  if (n > kMaxOracleSize) throw ContractError("Jacobi oracle limited to size 256");
  double scale_ref = 0.0;
  for (double v : x.data()) scale_ref = std::max(scale_ref, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(x.at(i, j) - x.at(j, i)) > 1e-9 * std::max(1.0, scale_ref)) {
        throw ContractError("Jacobi oracle needs a symmetric matrix");
      }

  Tensor a = x;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += a.at(i, i) * a.at(i, i);
      for (std::size_t j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
    }
    if (off <= 1e-30 * std::max(diag, std::numeric_limits<double>::min())) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (apq == 0.0) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a.at(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

ExtremeEigs exact_extreme_eigs(const Tensor& x) {
  const auto eig = symmetric_eigenvalues(x);
  return {eig.back(), eig.front()};
}

double condition_number(const Tensor& f) {
  if (f.rank() != 2) throw DimensionError("condition_number expects a matrix");
  if (frobenius_norm(f) == 0.0) throw ContractError("condition_number of a zero matrix");
  const Tensor g = gram(f);
  const auto e = exact_extreme_eigs(g);
  // Eigenvalues at rounding level of the largest one are a zero singular value.
  const double noise = static_cast<double>(g.dim(0)) * std::numeric_limits<double>::epsilon() * e.max;
  const double smax = std::sqrt(std::max(e.max, 0.0));
  const double smin = e.min <= noise ? 0.0 : std::sqrt(e.min);
  if (smin < 1e-12) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

}  // namespace divattn
