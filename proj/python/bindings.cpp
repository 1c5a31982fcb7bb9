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


#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "divattn/attention.hpp"
#include "divattn/checks.hpp"
#include "divattn/cli.hpp"
#include "divattn/config.hpp"
#include "divattn/errors.hpp"
#include "divattn/evaluate.hpp"
#include "divattn/losses.hpp"
#include "divattn/orthogonality.hpp"
#include "divattn/train.hpp"

namespace py = pybind11;

namespace divattn {
namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const RetrievalMetrics& m) {
  py::dict d;
  d["top1"] = m.top1;
  d["top5"] = m.top5;
  d["map"] = m.map;
  return d;
}

py::dict train_toy(const std::string& config_text, const std::string& variant,
                   std::uint64_t seed) {
  const RunConfig config = parse_config(config_text);
  ToyDatasetConfig dc = config.dataset;
  dc.image = config.network.input;
  const ToyDataset ds = make_toy_dataset(dc, dataset_seed(seed));
  const VariantSpec v = VariantSpec::parse(variant);
  std::optional<TrainResult> result;
  {
    py::gil_scoped_release release;
    result.emplace(train(ds, config, v, seed));
  }
  const TrainResult& r = *result;
  py::list log;
  for (const EpochLog& e : r.log) {
    py::dict row;
    row["epoch"] = e.epoch;
    row["stage"] = e.stage;
    row["lr"] = e.lr;
    row["loss"] = e.loss;
    row["xent"] = e.xent;
    row["triplet"] = e.triplet;
    row["of"] = e.of;
    row["ow"] = e.ow;
    row["train_top1"] = e.train_top1;
    log.append(row);
  }
  py::dict out;
  out["final"] = metrics_dict(r.final_metrics);
  out["stage1"] = r.stage1 ? py::object(metrics_dict(*r.stage1)) : py::none();
  out["log"] = log;
  return out;
}

}  // namespace
}  // namespace divattn

PYBIND11_MODULE(_divattn, m) {
  using namespace divattn;
  m.doc() = "Attention and spectral orthogonality regularization for re-identification";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<OracleFailure>(m, "OracleFailure", PyExc_ArithmeticError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("matmul", [](const Array& a, const Array& b) {
    return to_array(matmul(to_tensor(a), to_tensor(b)));
  });
  m.def("softmax_rows", [](const Array& a) { return to_array(softmax_rows(to_tensor(a))); });

  m.def("channel_affinity",
        [](const Array& a) { return to_array(channel_affinity(to_tensor(a)).entries); });
  m.def("cam_forward", [](const Array& a, double gamma) {
    return to_array(cam_forward(to_tensor(a), CamParams{gamma}));
  }, py::arg("a"), py::arg("gamma"));
  m.def("pam_forward_identity_heads", [](const Array& a, double gamma) {
    const Tensor t = to_tensor(a);
    const double eps = 1e-5;
    const std::size_t c = t.shape3().channels;
    PamParams p{gamma, eps, ProjectionHead::identity(c, eps), ProjectionHead::identity(c, eps),
                ProjectionHead::identity(c, eps)};
    return to_array(pam_forward(t, p));
  }, py::arg("a"), py::arg("gamma"),
        "PAM whose projection heads reduce to relu(a).");

  m.def("gram", [](const Array& f) { return to_array(gram(to_tensor(f))); });
  m.def("symmetric_eigenvalues", [](const Array& x) { return symmetric_eigenvalues(to_tensor(x)); });
  m.def("condition_number", [](const Array& f) { return condition_number(to_tensor(f)); });
  m.def("svdo_estimate", [](const Array& f, double beta, int iterations, std::uint64_t seed) {
    const SvdoEstimate e = svdo_estimate(to_tensor(f), SvdoConfig{beta, iterations, seed});
    py::dict d;
    d["lambda_max"] = e.lambda_max;
    d["lambda_min"] = e.lambda_min;
    d["penalty"] = e.penalty;
    d["degenerate"] = e.degenerate;
    return d;
  }, py::arg("f"), py::arg("beta") = 1.0, py::arg("iterations") = 2, py::arg("seed") = 0);
  m.def("svdo_penalty_grad", [](const Array& f, double beta, int iterations, std::uint64_t seed) {
    ad::Tape tape;
    const ad::Var x = tape.leaf(to_tensor(f));
    const ad::Var p = svdo_penalty(x, SvdoConfig{beta, iterations, seed});
    return py::make_tuple(p.value().item(), to_array(ad::backward(tape, p).at(x)));
  }, py::arg("f"), py::arg("beta") = 1.0, py::arg("iterations") = 2, py::arg("seed") = 0,
        "Penalty and its gradient with respect to f.");
  m.def("of_penalty", [](const Array& maps, double beta, int iterations, std::uint64_t seed) {
    return of_penalty(to_tensor(maps), SvdoConfig{beta, iterations, seed});
  }, py::arg("maps"), py::arg("beta") = 1.0, py::arg("iterations") = 2, py::arg("seed") = 0);

  m.def("cross_entropy", [](const Array& logits, const std::vector<int>& labels) {
    return cross_entropy(to_tensor(logits), labels);
  });
  m.def("batch_hard_triplet", [](const Array& emb, const std::vector<int>& labels, double alpha) {
    return batch_hard_triplet(Batch{to_tensor(emb), labels}, alpha);
  }, py::arg("embeddings"), py::arg("labels"), py::arg("alpha") = LossWeights{}.margin_alpha);

  m.def("average_precision", &average_precision);
  m.def("retrieval_metrics", [](const Array& q, const Array& g, const std::vector<int>& ql,
                                const std::vector<int>& gl) {
    const RankingResult r = rank_gallery(to_tensor(q), to_tensor(g), ql, gl);
    return metrics_dict({cmc_topk(r, 1).value, cmc_topk(r, 5).value, mean_ap(r).value});
  });
  m.def("correlation_report", [](const Array& map) {
    const CorrelationReport r = correlation_report(to_tensor(map));
    py::dict d;
    d["matrix"] = to_array(r.matrix);
    d["mean_offdiag"] = r.mean_offdiag;
    d["mean_full"] = r.mean_full;
    d["histogram"] = r.histogram;
    d["constant_channels"] = r.constant_channels;
    return d;
  });

  m.def("default_config", [] { return to_config_text(RunConfig{}); });
  m.def("normalize_config", [](const std::string& text) { return to_config_text(parse_config(text)); });
  m.def("train_toy", &train_toy, py::arg("config_text") = "", py::arg("variant") = "full",
        py::arg("seed") = 1);
  m.def("run_checks", [] {
    py::list out;
    for (const CheckResult& r : all_checks(CheckOptions{})) {
      py::dict d;
      d["suite"] = r.suite;
      d["name"] = r.name;
      d["max_error"] = r.max_error;
      d["tolerance"] = r.tolerance;
      d["passed"] = r.passed;
      out.append(d);
    }
    return out;
  });
  m.def("cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "divattn");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::run(static_cast<int>(argv.size()), argv.data());
  }, "Run the command-line front end with the given arguments; returns the exit code.");
}
