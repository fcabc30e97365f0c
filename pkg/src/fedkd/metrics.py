"""Multi-class evaluation: confusion matrix, per-class precision/recall/F1,
macro aggregate, error rate, and the per-round report record."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset
from .nn import ModelParams, forward


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[t][p]: rows with true class t predicted as p."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.ascontiguousarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"counts must be square, got shape {c.shape}")
        if (c < 0).any():
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def error_rate(self) -> float:
        wrong = self.total - int(np.trace(self.counts))
        return wrong / self.total

    @property
    def accuracy(self) -> float:
        # defined as the exact complement so accuracy + error_rate == 1.0
        return 1.0 - self.error_rate


def evaluate(params: ModelParams, test_set: Dataset) -> ConfusionMatrix:
    """Confusion matrix of argmax predictions; ties go to the lowest class."""
    if test_set.labels is None:
        raise ValueError("evaluation needs a labeled dataset")
    if test_set.n == 0:
        raise ValueError("evaluation needs a non-empty dataset")
    predicted = np.argmax(forward(params, test_set.features), axis=1)
    n_classes = test_set.num_classes
    counts = np.bincount(
        test_set.labels * n_classes + predicted, minlength=n_classes * n_classes
    ).reshape(n_classes, n_classes)
    return ConfusionMatrix(counts=counts)


def prf1(matrix: ConfusionMatrix) -> tuple[list[tuple[float, float, float]], float]:
    """Per-class (precision, recall, f1) plus unweighted macro F1.

    Any 0/0 ratio is defined as 0, so a class that is never predicted and
    never present scores zeros across the board.
    """
    if matrix.total == 0:
        raise ValueError("metrics need at least one evaluated row")
    counts = matrix.counts
    per_class: list[tuple[float, float, float]] = []
    for c in range(counts.shape[0]):
        tp = int(counts[c, c])
        fp = int(counts[:, c].sum()) - tp
        fn = int(counts[c, :].sum()) - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append((precision, recall, f1))
    macro = sum(p[2] for p in per_class) / len(per_class)
    return per_class, macro


@dataclass
class RoundReport:
    """One communication round's evaluation snapshot."""

    round: int
    per_class: list[tuple[float, float, float]]
    macro_f1: float
    error_rate: float
    ensemble_weights: Optional[list[float]] = None
    kl_before: Optional[float] = None
    kl_after: Optional[float] = None
    wall_time: float = 0.0

    @classmethod
    def from_confusion(cls, round_index: int, matrix: ConfusionMatrix, **extra) -> "RoundReport":
        per_class, macro = prf1(matrix)
        return cls(
            round=round_index,
            per_class=per_class,
            macro_f1=macro,
            error_rate=matrix.error_rate,
            **extra,
        )

    def to_json_dict(self, class_names) -> dict:
        doc = {
            "round": self.round,
            "per_class": {
                name: {"precision": p, "recall": r, "f1": f}
                for name, (p, r, f) in zip(class_names, self.per_class)
            },
            "macro_f1": self.macro_f1,
            "error_rate": self.error_rate,
            "wall_time": self.wall_time,
        }
        if self.ensemble_weights is not None:
            doc["ensemble_weights"] = list(self.ensemble_weights)
        if self.kl_before is not None:
            doc["kl_before"] = self.kl_before
        if self.kl_after is not None:
            doc["kl_after"] = self.kl_after
        return doc


def csv_header(class_names, n_clients: int) -> list[str]:
    cols = ["round", "error_rate", "macro_f1"]
    for name in class_names:
        cols += [f"precision_{name}", f"recall_{name}", f"f1_{name}"]
    cols += ["kl_before", "kl_after"]
    cols += [f"weight_client{i}" for i in range(n_clients)]
    return cols


def csv_row(report: RoundReport, n_clients: int) -> list[str]:
    """One deterministic CSV cell list; floats via repr, absent fields empty.

    Wall time is deliberately left out: report files must be byte-identical
    across reruns.
    """
    cells = [str(report.round), repr(report.error_rate), repr(report.macro_f1)]
    for p, r, f in report.per_class:
        cells += [repr(p), repr(r), repr(f)]
    cells += [
        "" if report.kl_before is None else repr(report.kl_before),
        "" if report.kl_after is None else repr(report.kl_after),
    ]
    weights = report.ensemble_weights
    for i in range(n_clients):
        cells.append("" if weights is None else repr(weights[i]))
    return cells
