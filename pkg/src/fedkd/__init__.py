"""Deterministic simulator of federated learning with ensemble-distillation
aggregation for multi-class tabular intrusion detection."""

from __future__ import annotations

__version__ = "0.1.0"

from .backend import name as backend_name
from .nn import (
    AdamState,
    ModelParams,
    adam_step,
    backward,
    cross_entropy_loss,
    fit_minibatches,
    forward,
    init_params,
    kl_distill_loss,
    softmax_temp,
)

__all__ = [
    "AdamState",
    "ModelParams",
    "adam_step",
    "backend_name",
    "backward",
    "cross_entropy_loss",
    "fit_minibatches",
    "forward",
    "init_params",
    "kl_distill_loss",
    "softmax_temp",
    "__version__",
]
