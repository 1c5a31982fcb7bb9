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


"""Attention and spectral orthogonality regularization for re-identification."""

from ._divattn import (
    ConfigError,
    ContractError,
    DimensionError,
    OracleFailure,
    average_precision,
    batch_hard_triplet,
    cam_forward,
    channel_affinity,
    cli,
    condition_number,
    correlation_report,
    cross_entropy,
    default_config,
    gram,
    matmul,
    normalize_config,
    of_penalty,
    pam_forward_identity_heads,
    retrieval_metrics,
    run_checks,
    softmax_rows,
    svdo_estimate,
    svdo_penalty_grad,
    symmetric_eigenvalues,
    train_toy,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "OracleFailure",
    "average_precision",
    "batch_hard_triplet",
    "cam_forward",
    "channel_affinity",
    "cli",
    "condition_number",
    "correlation_report",
    "cross_entropy",
    "default_config",
    "gram",
    "matmul",
    "normalize_config",
    "of_penalty",
    "pam_forward_identity_heads",
    "retrieval_metrics",
    "run_checks",
    "softmax_rows",
    "svdo_estimate",
    "svdo_penalty_grad",
    "symmetric_eigenvalues",
    "train_toy",
]
