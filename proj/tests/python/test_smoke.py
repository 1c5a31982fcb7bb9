# Copyright 2026 The divattn Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


import math

import numpy as np
import pytest

import divattn


def test_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5))
    np.testing.assert_allclose(divattn.matmul(a, b), a @ b, atol=1e-12)


def test_softmax_rows_sum_to_one():
    x = np.random.default_rng(1).normal(size=(3, 7)) * 20
    np.testing.assert_allclose(divattn.softmax_rows(x).sum(axis=1), 1.0, atol=1e-12)


def test_cam_matches_numpy_reference():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(4, 3, 2))
    f = a.reshape(4, -1)
    logits = f @ f.T
    x = np.exp(logits - logits.max(axis=1, keepdims=True))
    x /= x.sum(axis=1, keepdims=True)
    want = 0.3 * (x @ f).reshape(a.shape) + a
    np.testing.assert_allclose(divattn.cam_forward(a, 0.3), want, atol=1e-12)
    np.testing.assert_array_equal(divattn.cam_forward(a, 0.0), a)


def test_pam_identity_heads_gamma_zero():
    a = np.random.default_rng(3).normal(size=(3, 2, 2))
    np.testing.assert_array_equal(divattn.pam_forward_identity_heads(a, 0.0), a)


def test_svdo_estimate_matches_numpy_eigenvalues():
    rng = np.random.default_rng(4)
    q1, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    q2, _ = np.linalg.qr(rng.normal(size=(6, 3)))
    f = q1 @ np.diag(np.sqrt([9.0, 4.0, 1.0])) @ q2.T
    est = divattn.svdo_estimate(f, beta=0.5, iterations=200, seed=1)
    assert est["lambda_max"] == pytest.approx(9.0, rel=1e-8)
    assert est["lambda_min"] == pytest.approx(1.0, rel=1e-6)
    assert est["penalty"] == pytest.approx(0.5 * 64.0, rel=1e-6)
    np.testing.assert_allclose(divattn.symmetric_eigenvalues(f @ f.T), [1.0, 4.0, 9.0], atol=1e-10)


def test_svdo_gradient_matches_finite_difference():
    rng = np.random.default_rng(5)
    f = rng.normal(size=(3, 5))
    value, grad = divattn.svdo_penalty_grad(f, 1.0, 2, 7)
    h = 1e-6
    for idx in [(0, 0), (1, 3), (2, 4)]:
        fp, fm = f.copy(), f.copy()
        fp[idx] += h
        fm[idx] -= h
        num = (divattn.svdo_penalty_grad(fp, 1.0, 2, 7)[0] - divattn.svdo_penalty_grad(fm, 1.0, 2, 7)[0]) / (2 * h)
        assert grad[idx] == pytest.approx(num, rel=1e-5, abs=1e-8)
    assert value > 0


def test_losses_and_metrics():
    assert divattn.cross_entropy(np.ones((2, 3)), [0, 2]) == pytest.approx(math.log(3.0))
    emb = np.array([[0.0], [1.0], [3.0], [3.5]])
    assert divattn.batch_hard_triplet(emb, [0, 0, 1, 1]) == pytest.approx(0.05)
    assert divattn.average_precision([True, False, True]) == 5.0 / 6.0
    m = divattn.retrieval_metrics(np.array([[0.0]]), np.array([[1.0], [0.1]]), [1], [2, 1])
    assert m == {"top1": 1.0, "top5": 1.0, "map": 1.0}


def test_config_defaults_and_errors():
    text = divattn.default_config()
    assert "loss.beta_of = 1e-06" in text
    assert divattn.normalize_config(text) == text
    with pytest.raises(divattn.ConfigError):
        divattn.normalize_config("bogus.key = 1\n")


def test_shape_errors_raise_value_error():
    with pytest.raises(ValueError):
        divattn.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_train_toy_tiny_run_is_deterministic():
    cfg = "\n".join([
        "backbone.widths = 4, 4, 4, 8",
        "backbone.branch_width = 8",
        "backbone.input_shape = 3, 16, 8",
        "embedding.attentive_width = 4",
        "embedding.k_a = 4",
        "embedding.k_g = 4",
        "schedule.stage1_epochs = 1",
        "schedule.stage2_epochs = 1",
        "schedule.milestones = ",
        "schedule.batches_per_epoch = 2",
    ])
    a = divattn.train_toy(cfg, "full", 3)
    b = divattn.train_toy(cfg, "full", 3)
    assert a == b
    assert [row["stage"] for row in a["log"]] == [1, 2]
    assert 0.0 <= a["final"]["map"] <= 1.0


def test_cli_exit_codes(tmp_path):
    assert divattn.cli(["train", "--out", str(tmp_path / "x"), "--variant", "bogus"]) == 2
