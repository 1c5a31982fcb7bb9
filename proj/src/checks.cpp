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


#include "divattn/checks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>

#include <Eigen/QR>

#include "divattn/attention.hpp"
#include "divattn/autodiff.hpp"
#include "divattn/config.hpp"
#include "divattn/errors.hpp"
#include "divattn/evaluate.hpp"
#include "divattn/losses.hpp"
#include "divattn/network.hpp"
#include "divattn/orthogonality.hpp"
#include "divattn/rng.hpp"

namespace divattn {

namespace {

using ad::Var;

CheckResult make_result(std::string suite, std::string name, double err, double tol,
                        const CheckOptions& opt, std::string detail = {}) {
  const double scaled = tol * opt.tolerance_scale;
  return {std::move(suite), std::move(name), err, scaled, std::isfinite(err) && err <= scaled,
          std::move(detail)};
}

// ---------------------------------------------------------------------------
// Gradient checks

enum class Gen { kUniform, kAwayFromZero, kPositive, kDenominator };

struct Slot {
  Shape shape;
  Gen gen = Gen::kUniform;
};

struct OpCase {
  std::string name;
  std::vector<Slot> inputs;
  std::function<Var(std::span<const Var>)> apply;
  double tolerance = 1e-5;
};

Tensor generate(const Slot& s, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(s.shape);
  for (auto& v : t.data()) {
    double x = u(rng);
    switch (s.gen) {
      case Gen::kUniform:
        break;
      case Gen::kAwayFromZero:
        x = (x < 0 ? -1.0 : 1.0) * (0.05 + 0.95 * std::abs(x));
        break;
      case Gen::kPositive:
        x = 0.5 + std::abs(x);
        break;
      case Gen::kDenominator:
        x = (x < 0 ? -1.0 : 1.0) * (0.5 + std::abs(x));
        break;
    }
    v = x;
  }
  return t;
}

Var to_scalar(Var out, const Tensor& weights) {
  if (out.value().size() == 1) return ad::scale(out, weights[0]);
  return ad::sum(ad::mul(out, out.tape().constant(weights)));
}

/// Worst per-coordinate relative error over every input slot and trial.
double check_op(const OpCase& op, int trials, std::uint64_t seed, std::string* detail) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, op.name, static_cast<std::uint64_t>(t)));
    std::vector<Tensor> values;
    for (const auto& s : op.inputs) values.push_back(generate(s, rng));
    Tensor weights;
    {
      ad::Tape tape;
      std::vector<Var> vs;
      for (const auto& v : values) vs.push_back(tape.constant(v));
      weights = random_uniform(op.apply(vs).shape(), rng, 0.5, 1.5);
    }
    for (std::size_t slot = 0; slot < values.size(); ++slot) {
      auto f = [&](Var x) {
        std::vector<Var> vs;
        for (std::size_t j = 0; j < values.size(); ++j) {
          vs.push_back(j == slot ? x : x.tape().constant(values[j]));
        }
        return to_scalar(op.apply(vs), weights);
      };
      const double err = ad::finite_diff_check(f, values[slot]).max_rel_error;
      if (err > worst) {
        worst = err;
        if (detail) *detail = "input " + std::to_string(slot) + " trial " + std::to_string(t);
      }
    }
  }
  return worst;
}

std::vector<OpCase> tensor_op_cases() {
  using S = std::span<const Var>;
  const Gen away = Gen::kAwayFromZero;
  std::vector<OpCase> c;
  c.push_back({"add", {{{3, 4}}, {{3, 4}}}, [](S v) { return ad::add(v[0], v[1]); }});
  c.push_back({"sub", {{{3, 4}}, {{3, 4}}}, [](S v) { return ad::sub(v[0], v[1]); }});
  c.push_back({"mul", {{{3, 4}}, {{3, 4}}}, [](S v) { return ad::mul(v[0], v[1]); }});
  c.push_back({"div", {{{3, 4}}, {{3, 4}, Gen::kDenominator}},
               [](S v) { return ad::div(v[0], v[1]); }});
  c.push_back({"scale", {{{3, 4}}}, [](S v) { return ad::scale(v[0], 1.7); }});
  c.push_back({"scale_by", {{{3, 4}}, {Shape{}}}, [](S v) { return ad::scale_by(v[0], v[1]); }});
  c.push_back({"add_scalar", {{{3, 4}}}, [](S v) { return ad::add_scalar(v[0], -0.3); }});
  c.push_back({"matmul", {{{3, 4}}, {{4, 2}}}, [](S v) { return ad::matmul(v[0], v[1]); }});
  c.push_back({"transpose", {{{3, 4}}}, [](S v) { return ad::transpose(v[0]); }});
  c.push_back({"reshape", {{{3, 4}}}, [](S v) { return ad::reshape(v[0], {2, 6}); }});
  c.push_back({"relu", {{{3, 4}, away}}, [](S v) { return ad::relu(v[0]); }});
  c.push_back({"softmax_rows", {{{3, 5}}}, [](S v) { return ad::softmax_rows(v[0]); }});
  c.push_back({"sum", {{{3, 4}}}, [](S v) { return ad::sum(v[0]); }});
  c.push_back({"mean", {{{3, 4}}}, [](S v) { return ad::mean(v[0]); }});
  c.push_back({"norm", {{{3, 4}}}, [](S v) { return ad::norm(v[0]); }});
  c.push_back({"square", {{{3, 4}}}, [](S v) { return ad::square(v[0]); }});
  c.push_back({"sqrt", {{{3, 4}, Gen::kPositive}},
               [](S v) { return ad::sqrt_floor(v[0], kDistanceFloor); }});
  c.push_back({"concat_rows", {{{2, 3}}, {{1, 3}}}, [](S v) { return ad::concat(v, 0); }});
  c.push_back({"concat_channels", {{{2, 1, 2, 2}}, {{2, 2, 2, 2}}},
               [](S v) { return ad::concat(v, 1); }});
  c.push_back({"select", {{{3, 2, 2}}}, [](S v) { return ad::select(v[0], 1); }});
  c.push_back({"gather", {{{3, 4}}}, [](S v) { return ad::gather(v[0], {0, 5, 5, 11}); }});
  c.push_back({"conv2d_3x3", {{{2, 2, 5, 4}}, {{3, 2, 3, 3}}},
               [](S v) { return ad::conv2d(v[0], v[1], 1); }});
  c.push_back({"conv2d_1x1", {{{2, 3, 3, 2}}, {{4, 3, 1, 1}}},
               [](S v) { return ad::conv2d(v[0], v[1], 0); }});
  c.push_back({"max_pool2x2", {{{2, 2, 4, 4}}}, [](S v) { return ad::max_pool2x2(v[0]); }});
  c.push_back({"global_avg_pool", {{{2, 3, 2, 3}}},
               [](S v) { return ad::global_avg_pool(v[0]); }});
  c.push_back({"batch_norm_train_maps", {{{4, 3, 2, 2}}, {{3}}, {{3}}}, [](S v) {
                 return ad::batch_norm(v[0], v[1], v[2], 1e-5, true, nullptr, nullptr);
               }});
  c.push_back({"batch_norm_train_rows", {{{5, 3}}, {{3}}, {{3}}}, [](S v) {
                 return ad::batch_norm(v[0], v[1], v[2], 1e-5, true, nullptr, nullptr);
               }});
  c.push_back({"batch_norm_eval", {{{4, 3, 2, 2}}, {{3}}, {{3}}}, [](S v) {
                 static const ad::BatchNormStats running{Tensor::vector({0.1, -0.2, 0.3}),
                                                         Tensor::vector({0.5, 1.5, 2.0})};
                 return ad::batch_norm(v[0], v[1], v[2], 1e-5, false, &running, nullptr);
               }});
  c.push_back({"add_bias", {{{3, 4}}, {{4}}}, [](S v) { return ad::add_bias(v[0], v[1]); }});
  c.push_back({"cross_entropy", {{{4, 5}}}, [](S v) {
                 static const std::vector<int> labels{0, 3, 1, 4};
                 return ad::cross_entropy(v[0], labels);
               }});
  c.push_back({"pairwise_distance", {{{4, 3}}},
               [](S v) { return ad::pairwise_distance(v[0], kDistanceFloor); }});
  return c;
}

ad::BatchNormStats random_running(std::size_t c, Rng& rng) {
  return {random_uniform({c}, rng, -0.5, 0.5), random_uniform({c}, rng, 0.5, 2.0)};
}

std::vector<OpCase> attention_cases(std::uint64_t seed) {
  using S = std::span<const Var>;
  std::vector<OpCase> c;
  const double tol = 1e-4;
  c.push_back({"cam", {{{2, 3, 3, 2}}, {Shape{}}},
               [](S v) { return attention_ops::cam(v[0], v[1]); }, tol});
  auto pam_case = [&](bool training) {
    auto running = std::make_shared<std::array<ad::BatchNormStats, 3>>();
    Rng rng(derive_seed(seed, "pam-running"));
    for (auto& r : *running) r = random_running(3, rng);
    std::vector<Slot> slots{{{2, 3, 2, 2}}, {Shape{}}};
    for (int h = 0; h < 3; ++h) {
      slots.push_back({{3, 3, 1, 1}});
      slots.push_back({{3}, Gen::kPositive});
      slots.push_back({{3}});
    }
    return OpCase{training ? "pam_train" : "pam_eval", slots,
                  [running, training](S v) {
                    attention_ops::HeadVars heads[3];
                    for (int h = 0; h < 3; ++h) {
                      heads[h] = {v[2 + 3 * h], v[3 + 3 * h], v[4 + 3 * h], &(*running)[h], nullptr};
                    }
                    attention_ops::PamVars pv{v[1], heads[0], heads[1], heads[2], 1e-5};
                    return attention_ops::pam(v[0], pv, training).out;
                  },
                  tol};
  };
  c.push_back(pam_case(true));
  c.push_back(pam_case(false));
  return c;
}

std::vector<OpCase> svdo_cases(std::uint64_t seed) {
  using S = std::span<const Var>;
  SvdoConfig cfg;
  cfg.seed = derive_seed(seed, "svdo-grad");
  std::vector<OpCase> c;
  const double tol = 1e-4;
  c.push_back({"svdo_penalty", {{{5, 9}}}, [cfg](S v) { return svdo_penalty(v[0], cfg); }, tol});
  c.push_back({"of_penalty", {{{2, 3, 2, 3}}}, [cfg](S v) { return of_penalty(v[0], cfg); }, tol});
  c.push_back({"ow_view_penalty", {{{4, 3, 3, 3}}},
               [cfg](S v) { return svdo_penalty(weight_matrix_view(v[0]), cfg); }, tol});
  return c;
}

CheckResult network_gradient_check(const CheckOptions& opt) {
  NetworkConfig nc;
  nc.widths = {4, 4, 4, 8};
  nc.branch_width = 8;
  nc.input = {3, 16, 16};
  nc.attentive_width = 4;
  nc.k_a = 4;
  nc.k_g = 4;
  Network net(nc, 2, derive_seed(opt.seed, "micro-net"));
  // Nonzero attention weights so every branch contributes.
  for (const char* g : {"cam_early.gamma", "cam_branch.gamma", "pam_branch.gamma"}) {
    net.parameters()[net.parameter_index(g)].value = Tensor::scalar(0.5);
  }
  Rng rng(derive_seed(opt.seed, "micro-batch"));
  const Tensor images = random_uniform({4, 3, 16, 16}, rng);
  const std::vector<int> labels{0, 0, 1, 1};
  LossWeights w;
  w.beta_of = 1e-3;
  w.beta_ow = 1e-2;
  ForwardOptions fo;
  fo.mode = Mode::kTrain;
  fo.variant = VariantSpec::parse("full");
  fo.step_seed = derive_seed(opt.seed, "micro-step");
  SvdoConfig svdo;
  svdo.seed = derive_seed(opt.seed, "micro-svdo");

  auto loss_of = [&](ad::Tape& tape, ForwardResult& fwd) {
    fwd = net.forward(tape, images, fo);
    return total_loss(ad::cross_entropy(fwd.logits, labels),
                      batch_hard_triplet(fwd.embedding, labels, w.margin_alpha),
                      net.of_penalty(fwd, svdo, Reduction::kMean),
                      net.ow_penalty(fwd, svdo, Reduction::kSum), w);
  };
  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    ForwardResult fwd;
    const Var loss = loss_of(tape, fwd);
    const auto grads = ad::backward(tape, loss);
    for (const auto& p : fwd.params) analytic.push_back(grads.at(p));
  }
  auto eval = [&] {
    ad::Tape tape;
    ForwardResult fwd;
    return loss_of(tape, fwd).value().item();
  };
  const double h = 1e-5;
  double worst = 0.0;
  std::string where;
  constexpr std::size_t kProbesPerParam = 24;
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    Tensor& value = net.parameters()[i].value;
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), 0);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min(coords.size(), kProbesPerParam));
    for (auto k : coords) {
      const double x0 = value[k];
      value[k] = x0 + h;
      const double up = eval();
      value[k] = x0 - h;
      const double down = eval();
      value[k] = x0;
      const double num = (up - down) / (2.0 * h);
      const double a = analytic[i][k];
      const double err = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-8});
      if (err > worst) {
        worst = err;
        where = net.parameters()[i].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return make_result("gradient", "network_micro_batch", worst, 1e-3, opt, where);
}

// ---------------------------------------------------------------------------
// Eigenvalue estimates against the Jacobi solver

Tensor random_orthonormal_columns(std::size_t rows, std::size_t cols, Rng& rng) {
  const Tensor g = random_normal({rows, cols}, rng);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g.at(i, j);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ() *
                            Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(rows),
                                                      static_cast<Eigen::Index>(cols));
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

/// Eigenvalues of F F^T (descending) with lambda_1 >= 1.5 lambda_2 and
/// (lambda_1 - lambda_n) >= 1.5 (lambda_1 - lambda_{n-1}).
std::vector<double> gapped_spectrum(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double top = 10.0;
  std::vector<double> lam(n);
  lam[0] = top;
  lam[n - 1] = 0.2 + 0.8 * u(rng);
  const double lo = top - (top - lam[n - 1]) / 1.5;
  const double hi = top / 1.5;
  for (std::size_t i = 1; i + 1 < n; ++i) lam[i] = lo + 0.1 + (hi - lo - 0.2) * u(rng);
  std::sort(lam.begin(), lam.end(), std::greater<>());
  const double s = std::exp(std::uniform_real_distribution<double>(-2.0, 2.0)(rng));
  for (auto& l : lam) l *= s;
  return lam;
}

}  // namespace

Tensor matrix_with_spectrum(const std::vector<double>& eigenvalues, std::size_t cols, Rng& rng) {
  const std::size_t rows = eigenvalues.size();
  if (rows == 0 || cols < rows) throw ContractError("matrix_with_spectrum needs cols >= rows > 0");
  const Tensor u = random_orthonormal_columns(rows, rows, rng);
  const Tensor v = random_orthonormal_columns(cols, rows, rng);
  Tensor us = u;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < rows; ++j) us.at(i, j) *= std::sqrt(eigenvalues[j]);
  return matmul(us, transpose(v));
}

std::vector<CheckResult> gradient_checks(const CheckOptions& opt) {
  std::vector<CheckResult> out;
  auto run = [&](const std::vector<OpCase>& cases, const char* suite) {
    for (const auto& op : cases) {
      std::string detail;
      const double err = check_op(op, opt.gradient_trials, opt.seed, &detail);
      out.push_back(make_result(suite, op.name, err, op.tolerance, opt, detail));
    }
  };
  run(tensor_op_cases(), "gradient");
  run(attention_cases(opt.seed), "gradient");
  run(svdo_cases(opt.seed), "gradient");
  out.push_back(network_gradient_check(opt));
  return out;
}

std::vector<CheckResult> eigen_checks(const CheckOptions& opt) {
  constexpr int kMatrices = 100;
  double err_max = 0.0, err_min = 0.0, err_pen = 0.0, worst_gap = std::numeric_limits<double>::infinity();
  std::size_t degenerate = 0;
  for (int t = 0; t < kMatrices; ++t) {
    Rng rng(derive_seed(opt.seed, "eigen", static_cast<std::uint64_t>(t)));
    const std::size_t rows = std::uniform_int_distribution<std::size_t>(2, 32)(rng);
    const std::size_t cols = std::uniform_int_distribution<std::size_t>(rows, 64)(rng);
    const std::vector<double> lam = gapped_spectrum(rows, rng);
    const Tensor f = matrix_with_spectrum(lam, cols, rng);

    std::vector<double> exact = symmetric_eigenvalues(gram(f));
    std::sort(exact.begin(), exact.end(), std::greater<>());
    const std::size_t n = exact.size();
    double gap = exact[0] / exact[1];
    if (n > 2) gap = std::min(gap, (exact[0] - exact[n - 1]) / (exact[0] - exact[n - 2]));
    worst_gap = std::min(worst_gap, gap);

    SvdoConfig cfg;
    cfg.iterations = 50;
    cfg.beta = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    cfg.seed = derive_seed(opt.seed, "eigen-q", static_cast<std::uint64_t>(t));
    const SvdoEstimate est = svdo_estimate(f, cfg);
    if (est.degenerate) ++degenerate;
    const double lmax = exact[0], lmin = exact[n - 1];
    err_max = std::max(err_max, std::abs(est.lambda_max - lmax) / lmax);
    err_min = std::max(err_min, std::abs(est.lambda_min - lmin) / lmin);
    const double pen = cfg.beta * (lmax - lmin) * (lmax - lmin);
    err_pen = std::max(err_pen, std::abs(est.penalty - pen) / pen);
  }
  std::vector<CheckResult> out;
  out.push_back(make_result("eigen", "spectral_gap", worst_gap >= 1.5 ? 0.0 : 1.5 - worst_gap, 0.0,
                            opt, "smallest gap ratio " + std::to_string(worst_gap)));
  out.push_back(make_result("eigen", "lambda_max", err_max, 1e-2, opt));
  out.push_back(make_result("eigen", "lambda_min", err_min, 1e-2, opt));
  out.push_back(make_result("eigen", "svdo_penalty", err_pen, 2e-2, opt));
  out.push_back(make_result("eigen", "no_degenerate_estimates", static_cast<double>(degenerate),
                            0.0, opt));
  return out;
}

namespace {

Tensor permute_channels(const Tensor& a, const std::vector<std::size_t>& perm) {
  const Shape3 s = a.shape3();
  Tensor out(a.shape());
  for (std::size_t c = 0; c < s.channels; ++c)
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x) out.at(c, y, x) = a.at(perm[c], y, x);
  return out;
}

ProjectionHead random_head(std::size_t c, Rng& rng) {
  ProjectionHead h;
  h.weight = random_uniform({c, c, 1, 1}, rng);
  h.bn_gamma = random_uniform({c}, rng, 0.5, 1.5);
  h.bn_beta = random_uniform({c}, rng, -0.5, 0.5);
  h.running_mean = random_uniform({c}, rng, -0.5, 0.5);
  h.running_var = random_uniform({c}, rng, 0.5, 2.0);
  return h;
}

ProjectionHead permute_head(const ProjectionHead& h, const std::vector<std::size_t>& perm) {
  const std::size_t c = perm.size();
  ProjectionHead out = h;
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.weight[i * c + j] = h.weight[perm[i] * c + perm[j]];
    out.bn_gamma[i] = h.bn_gamma[perm[i]];
    out.bn_beta[i] = h.bn_beta[perm[i]];
    out.running_mean[i] = h.running_mean[perm[i]];
    out.running_var[i] = h.running_var[perm[i]];
  }
  return out;
}

}  // namespace

std::vector<CheckResult> attention_checks(const CheckOptions& opt) {
  AffinityAudit::current().reset();
  constexpr int kTrials = 50;
  double cam_id = 0.0, pam_id = 0.0, cam_perm = 0.0, pam_perm = 0.0;
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(derive_seed(opt.seed, "attention", static_cast<std::uint64_t>(t)));
    const std::size_t c = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    const std::size_t h = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
    const std::size_t w = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
    const Tensor a = random_uniform({c, h, w}, rng);

    cam_id = std::max(cam_id, max_abs_diff(cam_forward(a, CamParams{0.0}), a));
    PamParams pam{0.0, 1e-5, random_head(c, rng), random_head(c, rng), random_head(c, rng)};
    pam_id = std::max(pam_id, max_abs_diff(pam_forward(a, pam), a));

    std::vector<std::size_t> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor pa = permute_channels(a, perm);
    const CamParams cam{std::uniform_real_distribution<double>(0.1, 1.0)(rng)};
    cam_perm = std::max(cam_perm,
                        max_abs_diff(cam_forward(pa, cam), permute_channels(cam_forward(a, cam), perm)));
    pam.gamma = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
    PamParams ppam = pam;
    ppam.query = permute_head(pam.query, perm);
    ppam.key = permute_head(pam.key, perm);
    ppam.value = permute_head(pam.value, perm);
    pam_perm = std::max(pam_perm,
                        max_abs_diff(pam_forward(pa, ppam), permute_channels(pam_forward(a, pam), perm)));
  }
  std::vector<CheckResult> out;
  out.push_back(make_result("attention", "cam_gamma_zero_identity", cam_id, 1e-12, opt));
  out.push_back(make_result("attention", "pam_gamma_zero_identity", pam_id, 1e-12, opt));
  out.push_back(make_result("attention", "cam_channel_permutation", cam_perm, 1e-9, opt));
  out.push_back(make_result("attention", "pam_channel_permutation", pam_perm, 1e-9, opt));
  const AffinityAudit& audit = AffinityAudit::current();
  out.push_back(make_result("attention", "affinity_rows_sum_to_one", audit.worst_row_error, 1e-8,
                            opt, std::to_string(audit.matrices) + " matrices"));
  return out;
}

namespace {

double oracle_distance(const Tensor& e, std::size_t i, std::size_t j) {
  double sq = 0.0;
  for (std::size_t k = 0; k < e.dim(1); ++k) {
    const double d = e.at(i, k) - e.at(j, k);
    sq += d * d;
  }
  return std::sqrt(std::max(sq, kDistanceFloor));
}

/// Mean over anchors of the worst hinge over every (positive, negative) pair.
double exhaustive_triplet(const Tensor& e, const std::vector<int>& labels, double alpha) {
  const std::size_t n = labels.size();
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    double worst = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (labels[q] == labels[a]) continue;
        worst = std::max(worst, oracle_distance(e, a, p) - oracle_distance(e, a, q) + alpha);
      }
    }
    total += worst;
  }
  return total / static_cast<double>(n);
}

double per_sample_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    long double z = 0.0L;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<long double>(logits.at(i, j)));
    total += static_cast<double>(std::log(z) - logits.at(i, static_cast<std::size_t>(labels[i])));
  }
  return total / static_cast<double>(n);
}

}  // namespace

std::vector<CheckResult> loss_checks(const CheckOptions& opt) {
  constexpr int kTrials = 100;
  double trip_err = 0.0, xent_err = 0.0;
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(derive_seed(opt.seed, "loss", static_cast<std::uint64_t>(t)));
    const std::size_t p = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
    const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    std::vector<int> labels;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < k; ++j) labels.push_back(static_cast<int>(i) * 7 + 3);
    std::shuffle(labels.begin(), labels.end(), rng);
    const Tensor e = random_uniform({p * k, dim}, rng, -2.0, 2.0);
    const double alpha = t % 2 ? 1.2 : std::uniform_real_distribution<double>(0.0, 3.0)(rng);
    trip_err = std::max(trip_err, std::abs(batch_hard_triplet(Batch{e, labels}, alpha) -
                                           exhaustive_triplet(e, labels, alpha)));

    const std::size_t classes = std::uniform_int_distribution<std::size_t>(2, 10)(rng);
    const std::size_t rows = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
    const Tensor logits = random_uniform({rows, classes}, rng, -5.0, 5.0);
    std::vector<int> y(rows);
    for (auto& v : y) {
      v = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, classes - 1)(rng));
    }
    xent_err = std::max(xent_err, std::abs(cross_entropy(logits, y) - per_sample_cross_entropy(logits, y)));
  }
  std::vector<CheckResult> out;
  out.push_back(make_result("loss", "batch_hard_triplet_exhaustive", trip_err, 0.0, opt));
  out.push_back(make_result("loss", "cross_entropy_per_sample", xent_err, 1e-9, opt));

  const LossWeights defaults;
  const RunConfig round = parse_config(to_config_text(RunConfig{}));
  const bool ok = defaults.beta_tr == 0.1 && defaults.beta_of == 1e-6 && defaults.beta_ow == 1e-3 &&
                  defaults.margin_alpha == 1.2 && round.loss.beta_tr == 0.1 &&
                  round.loss.beta_of == 1e-6 && round.loss.beta_ow == 1e-3 &&
                  round.loss.margin_alpha == 1.2;
  out.push_back(make_result("loss", "default_coefficients", ok ? 0.0 : 1.0, 0.0, opt,
                            "beta_tr 0.1, beta_of 1e-6, beta_ow 1e-3, alpha 1.2"));
  return out;
}

namespace {

struct OracleScores {
  double top1, top5, map;
};

OracleScores brute_force_scores(const Tensor& q, const Tensor& g, const std::vector<int>& ql,
                                const std::vector<int>& gl) {
  const std::size_t nq = q.dim(0), ng = g.dim(0), d = q.dim(1);
  std::size_t hit1 = 0, hit5 = 0;
  double ap_sum = 0.0;
  for (std::size_t i = 0; i < nq; ++i) {
    std::vector<double> dist(ng);
    for (std::size_t j = 0; j < ng; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) sq += (q.at(i, k) - g.at(j, k)) * (q.at(i, k) - g.at(j, k));
      dist[j] = std::sqrt(sq);
    }
    // Rank of every gallery item by counting the items ahead of it.
    std::vector<bool> match_at_rank(ng, false);
    for (std::size_t j = 0; j < ng; ++j) {
      std::size_t ahead = 0;
      for (std::size_t m = 0; m < ng; ++m) {
        if (dist[m] < dist[j] || (dist[m] == dist[j] && m < j)) ++ahead;
      }
      if (gl[j] == ql[i]) match_at_rank[ahead] = true;
    }
    std::size_t first = ng;
    long double acc = 0.0L;
    std::size_t found = 0;
    for (std::size_t r = 0; r < ng; ++r) {
      if (!match_at_rank[r]) continue;
      if (first == ng) first = r;
      ++found;
      acc += static_cast<long double>(found) / static_cast<long double>(r + 1);
    }
    if (first < 1) ++hit1;
    if (first < 5) ++hit5;
    ap_sum += static_cast<double>(acc / static_cast<long double>(found));
  }
  const double n = static_cast<double>(nq);
  return {static_cast<double>(hit1) / n, static_cast<double>(hit5) / n, ap_sum / n};
}

}  // namespace

std::vector<CheckResult> metric_checks(const CheckOptions& opt) {
  constexpr int kTrials = 200;
  double err = 0.0;
  for (int t = 0; t < kTrials; ++t) {
    Rng rng(derive_seed(opt.seed, "metrics", static_cast<std::uint64_t>(t)));
    const std::size_t nq = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
    const std::size_t ng = std::uniform_int_distribution<std::size_t>(1, 50)(rng);
    const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    const int ids = static_cast<int>(std::uniform_int_distribution<std::size_t>(1, 6)(rng));
    std::vector<int> gl(ng), ql(nq);
    for (auto& v : gl) v = std::uniform_int_distribution<int>(0, ids - 1)(rng);
    for (auto& v : ql) v = gl[std::uniform_int_distribution<std::size_t>(0, ng - 1)(rng)];
    const Tensor q = random_uniform({nq, dim}, rng);
    const Tensor g = random_uniform({ng, dim}, rng);
    const RankingResult r = rank_gallery(q, g, ql, gl);
    const OracleScores o = brute_force_scores(q, g, ql, gl);
    err = std::max({err, std::abs(cmc_topk(r, 1).value - o.top1),
                    std::abs(cmc_topk(r, 5).value - o.top5), std::abs(mean_ap(r).value - o.map)});
  }
  std::vector<CheckResult> out;
  out.push_back(make_result("metrics", "cmc_map_brute_force", err, 0.0, opt));
  out.push_back(make_result("metrics", "ap_single_match_rank2",
                            std::abs(average_precision({false, true}) - 0.5), 0.0, opt));
  out.push_back(make_result("metrics", "ap_matches_rank1_rank3",
                            std::abs(average_precision({true, false, true}) - 5.0 / 6.0), 0.0, opt));
  return out;
}

std::vector<CheckResult> all_checks(const CheckOptions& opt) {
  std::vector<CheckResult> out;
  for (auto suite : {gradient_checks, eigen_checks, attention_checks, loss_checks, metric_checks}) {
    auto part = suite(opt);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

void write_check_report(std::ostream& out, const std::vector<CheckResult>& results) {
  out << "suite,check,max_error,tolerance,status,detail\n";
  for (const auto& r : results) {
    out << r.suite << ',' << r.name << ',' << r.max_error << ',' << r.tolerance << ','
        << (r.passed ? "pass" : "fail") << ',' << r.detail << '\n';
  }
}

}  // namespace divattn
