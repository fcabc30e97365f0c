"""Feature schema, dataset container, CSV ingestion, and the synthetic
flow-feature generator.

A schema names every column of the canonical feature space; a dataset may
carry only a prefix of those columns (narrow clients), and
:func:`pad_to_canonical` widens it back with zeros so all models share one
input shape. Standardization is an explicit two-step (fit stats on training
rows, apply everywhere) so held-out rows never leak into the statistics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

DEFAULT_CLASS_NAMES = ("benign", "syn", "udp", "ldap", "mssql", "netbios", "udplag")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered names of the full canonical feature space."""

    columns: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.columns:
            raise ValueError("schema needs at least one column")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("schema column names must be unique")
        object.__setattr__(self, "columns", tuple(str(c) for c in self.columns))

    @property
    def canonical_dim(self) -> int:
        return len(self.columns)

    @classmethod
    def default(cls, dim: int) -> "FeatureSchema":
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        return cls(columns=tuple(f"f{i:02d}" for i in range(dim)))


@dataclass
class Dataset:
    """Numeric feature rows, optional integer labels, and their schema.

    ``features`` holds the first ``width`` columns of the schema; a narrower
    width than canonical marks a reduced-dimension view.
    """

    features: np.ndarray
    labels: Optional[np.ndarray]
    schema: FeatureSchema
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {self.features.shape}")
        if self.features.shape[1] > self.schema.canonical_dim or self.features.shape[1] == 0:
            raise ValueError(
                f"width {self.features.shape[1]} outside [1, {self.schema.canonical_dim}]"
            )
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")
        self.class_names = tuple(self.class_names)
        if not self.class_names:
            raise ValueError("class_names must be non-empty")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ValueError(
                    f"{self.features.shape[0]} rows but labels shape {self.labels.shape}"
                )
            if self.labels.size and (
                self.labels.min() < 0 or self.labels.max() >= len(self.class_names)
            ):
                raise ValueError(f"labels must lie in [0, {len(self.class_names)})")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            features=self.features[rows],
            labels=None if self.labels is None else self.labels[rows],
            schema=self.schema,
            class_names=self.class_names,
        )

    def without_labels(self) -> "Dataset":
        return Dataset(
            features=self.features.copy(),
            labels=None,
            schema=self.schema,
            class_names=self.class_names,
        )


def load_csv(
    path,
    schema: FeatureSchema,
    labeled: bool,
    class_names: Optional[Sequence[str]] = None,
) -> tuple[Dataset, int]:
    """Read a comma-separated file whose header is a prefix of the schema.

    Rows with non-numeric or non-finite cells are dropped; the second return
    value counts them. When ``labeled``, the final column must be named
    ``label`` and hold integer class ids. No scaling is applied here.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        feature_names = header[:-1] if labeled else header
        if labeled and (not header or header[-1] != "label"):
            raise ValueError(f"{path}: labeled file must end with a 'label' column")
        if not feature_names:
            raise ValueError(f"{path}: no feature columns")
        width = len(feature_names)
        if width > schema.canonical_dim or tuple(feature_names) != schema.columns[:width]:
            raise ValueError(
                f"{path}: header {feature_names[:4]}... does not match the leading "
                f"schema columns {list(schema.columns[:4])}..."
            )
        rows: list[list[float]] = []
        labels: list[int] = []
        dropped = 0
        for cells in reader:
            if not cells:
                continue
            if len(cells) != len(header):
                dropped += 1
                continue
            try:
                values = [float(c) for c in cells[:width]]
                if labeled:
                    label = int(cells[width])
            except ValueError:
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in values):
                dropped += 1
                continue
            rows.append(values)
            if labeled:
                labels.append(label)
    if not rows:
        raise ValueError(f"{path}: no usable rows ({dropped} dropped)")
    if class_names is None:
        n_classes = (max(labels) + 1) if labeled and labels else len(DEFAULT_CLASS_NAMES)
        class_names = tuple(f"class{i}" for i in range(n_classes))
    dataset = Dataset(
        features=np.array(rows, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64) if labeled else None,
        schema=schema,
        class_names=tuple(class_names),
    )
    return dataset, dropped


def synth_generate(
    n_per_class: int,
    num_classes: int,
    canonical_dim: int,
    seed,
    separation: float = 3.75,
    class_names: Optional[Sequence[str]] = None,
) -> Dataset:
    """Gaussian-mixture stand-in for preprocessed flow features.

    Each class is an isotropic unit-variance Gaussian around its own mean.
    Means point along near-orthogonal random directions whose coordinate
    amplitude ramps up with column index, so later columns carry more class
    signal than earlier ones and prefix-width views lose real information.
    """
    if n_per_class <= 0 or num_classes <= 0 or canonical_dim <= 0:
        raise ValueError(
            f"sizes must be positive, got ({n_per_class}, {num_classes}, {canonical_dim})"
        )
    if num_classes > canonical_dim:
        raise ValueError(
            f"need canonical_dim >= num_classes, got {canonical_dim} < {num_classes}"
        )
    if separation < 0:
        raise ValueError(f"separation must be >= 0, got {separation}")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((canonical_dim, num_classes)))
    ramp = 1.0 + np.arange(canonical_dim) / canonical_dim
    directions = q[:, :num_classes].T * ramp
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = separation * directions
    features = np.zeros((n_per_class * num_classes, canonical_dim))
    labels = np.zeros(n_per_class * num_classes, dtype=np.int64)
    for c in range(num_classes):
        block = slice(c * n_per_class, (c + 1) * n_per_class)
        features[block] = means[c] + rng.standard_normal((n_per_class, canonical_dim))
        labels[block] = c
    if class_names is None:
        if num_classes == len(DEFAULT_CLASS_NAMES):
            class_names = DEFAULT_CLASS_NAMES
        else:
            class_names = tuple(f"class{i}" for i in range(num_classes))
    return Dataset(
        features=features,
        labels=labels,
        schema=FeatureSchema.default(canonical_dim),
        class_names=tuple(class_names),
    )


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-score statistics, fit on training rows only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError(f"need a non-empty 2-d array, got shape {x.shape}")
        std = x.std(axis=0)
        # constant columns map to zero instead of blowing up
        return cls(mean=x.mean(axis=0), std=np.where(std < 1e-12, 1.0, std))

    def apply(self, dataset: Dataset) -> Dataset:
        if dataset.width != self.mean.shape[0]:
            raise ValueError(
                f"standardizer fit on {self.mean.shape[0]} columns, dataset has "
                f"{dataset.width}"
            )
        return Dataset(
            features=(dataset.features - self.mean) / self.std,
            labels=None if dataset.labels is None else dataset.labels.copy(),
            schema=dataset.schema,
            class_names=dataset.class_names,
        )


def stratified_split(dataset: Dataset, fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Split into (held, rest): round(fraction * n_c) rows per class are held.

    Deterministic per seed; rows are drawn without replacement per class.
    """
    if dataset.labels is None:
        raise ValueError("stratified_split needs a labeled dataset")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    held: list[np.ndarray] = []
    rest: list[np.ndarray] = []
    for c in range(dataset.num_classes):
        rows = np.flatnonzero(dataset.labels == c)
        take = int(round(fraction * rows.size))
        order = rng.permutation(rows)
        held.append(order[:take])
        rest.append(order[take:])
    held_idx = np.sort(np.concatenate(held))
    rest_idx = np.sort(np.concatenate(rest))
    return dataset.subset(held_idx), dataset.subset(rest_idx)


def restrict_width(dataset: Dataset, width: int) -> Dataset:
    """Keep only the first ``width`` schema columns."""
    if not 1 <= width <= dataset.width:
        raise ValueError(f"width must lie in [1, {dataset.width}], got {width}")
    return Dataset(
        features=dataset.features[:, :width].copy(),
        labels=None if dataset.labels is None else dataset.labels.copy(),
        schema=dataset.schema,
        class_names=dataset.class_names,
    )


def pad_to_canonical(dataset: Dataset) -> Dataset:
    """Append zero columns until the dataset spans its full schema."""
    missing = dataset.schema.canonical_dim - dataset.width
    if missing == 0:
        return dataset
    return Dataset(
        features=np.hstack([dataset.features, np.zeros((dataset.n, missing))]),
        labels=None if dataset.labels is None else dataset.labels.copy(),
        schema=dataset.schema,
        class_names=dataset.class_names,
    )
