"""Ensemble knowledge distillation: score the client models on held-out
validation data, weight them by a sharpened softmax over those accuracies,
blend their proxy-set logits, and fine-tune the fused global model toward the
blend with a temperature KL loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset
from .metrics import evaluate
from .nn import ModelParams, fit_minibatches, forward, kl_distill_loss, softmax_temp


@dataclass(frozen=True)
class DistillConfig:
    """Knobs of the distillation stage."""

    kd_temperature: float = 1.5
    dt: float = 0.5
    fine_tune_epochs: int = 1
    lr0: float = 0.001
    lr_decay: float = 0.05
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.kd_temperature <= 0 or self.dt <= 0:
            raise ValueError("temperatures must be positive")
        if self.fine_tune_epochs < 0:
            raise ValueError(f"fine_tune_epochs must be >= 0, got {self.fine_tune_epochs}")
        if self.lr0 <= 0 or self.batch_size < 1:
            raise ValueError("lr0 and batch_size must be positive")


@dataclass(frozen=True)
class EnsembleWeights:
    """Softmax-over-accuracy teacher weights at deterministic temperature dt."""

    weights: np.ndarray
    accuracies: np.ndarray
    dt: float

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        a = np.ascontiguousarray(self.accuracies, dtype=np.float64)
        if w.shape != a.shape or w.ndim != 1:
            raise ValueError("weights and accuracies must be matching vectors")
        if (w <= 0).any() or abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "accuracies", a)


def score_teachers(
    client_params_list: Sequence[ModelParams], validation_set: Dataset
) -> np.ndarray:
    """Plain accuracy of each client model on the validation set."""
    if validation_set.labels is None or validation_set.n == 0:
        raise ValueError("teacher scoring needs a non-empty labeled validation set")
    return np.array(
        [evaluate(p, validation_set).accuracy for p in client_params_list]
    )


def ensemble_weights(accuracies, dt: float) -> EnsembleWeights:
    """softmax(accuracies / dt); dt < 1 sharpens the gap between teachers."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    acc = np.ascontiguousarray(accuracies, dtype=np.float64)
    if acc.ndim != 1 or acc.size == 0:
        raise ValueError("accuracies must be a non-empty vector")
    if not np.isfinite(acc).all():
        raise ValueError("accuracies must be finite")
    return EnsembleWeights(weights=softmax_temp(acc, dt), accuracies=acc, dt=dt)


def ensemble_logits(teacher_logits_list: Sequence[np.ndarray], weights) -> np.ndarray:
    """Weighted sum of per-teacher logit matrices."""
    if not teacher_logits_list:
        raise ValueError("no teacher logits to ensemble")
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if w.shape != (len(teacher_logits_list),):
        raise ValueError(
            f"{len(teacher_logits_list)} teachers but weight shape {w.shape}"
        )
    stack = [np.ascontiguousarray(t, dtype=np.float64) for t in teacher_logits_list]
    shape = stack[0].shape
    for t in stack[1:]:
        if t.shape != shape:
            raise ValueError(f"teacher logit shapes differ: {t.shape} vs {shape}")
    out = np.zeros(shape)
    for wi, t in zip(w, stack):
        out += wi * t
    return out


def fine_tune(
    global_params: ModelParams,
    proxy_set: Dataset,
    teacher_logits_list: Sequence[np.ndarray],
    weights: EnsembleWeights,
    config: DistillConfig,
    *,
    seed=0,
    start_tick: int = 0,
) -> ModelParams:
    """Mini-batch Adam on the KL loss toward the ensembled teacher logits.

    Teacher logits stay fixed throughout; Adam moments start fresh and the
    learning rate decays once per fine-tune epoch, continuing from
    ``start_tick`` epochs of accumulated decay.
    """
    if proxy_set.n == 0:
        raise ValueError("fine-tuning needs a non-empty proxy set")
    target = ensemble_logits(teacher_logits_list, weights.weights)
    params, _ = fit_minibatches(
        global_params,
        proxy_set.features,
        target,
        objective="kl",
        temperature=config.kd_temperature,
        epochs=config.fine_tune_epochs,
        batch_size=config.batch_size,
        lr0=config.lr0,
        decay=config.lr_decay,
        seed=seed,
        start_tick=start_tick,
        tick_per_epoch=True,
    )
    return params


@dataclass(frozen=True)
class DistillStage:
    """What one round's distillation did, for reporting."""

    weights: EnsembleWeights
    kl_before: float
    kl_after: float


def distill_round(
    fused: ModelParams,
    teacher_params: Sequence[ModelParams],
    proxy: Dataset,
    validation: Dataset,
    config: DistillConfig,
    *,
    seed=0,
    start_tick: int = 0,
) -> tuple[ModelParams, DistillStage]:
    """Run the whole stage once: score, weight, ensemble, fine-tune."""
    accuracies = score_teachers(teacher_params, validation)
    weights = ensemble_weights(accuracies, config.dt)
    teacher_logits = [forward(p, proxy.features) for p in teacher_params]
    target = ensemble_logits(teacher_logits, weights.weights)
    kl_before = kl_distill_loss(
        forward(fused, proxy.features), target, config.kd_temperature
    )[0]
    tuned = fine_tune(
        fused, proxy, teacher_logits, weights, config, seed=seed, start_tick=start_tick
    )
    kl_after = kl_distill_loss(
        forward(tuned, proxy.features), target, config.kd_temperature
    )[0]
    return tuned, DistillStage(weights=weights, kl_before=kl_before, kl_after=kl_after)
