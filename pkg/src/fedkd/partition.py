"""Dirichlet non-IID partitioning and the server-side proxy sampler."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset

MAX_REDRAWS = 100


@dataclass
class PartitionSpec:
    """Disjoint per-client row indices over one dataset."""

    client_indices: list[np.ndarray]
    alpha: float
    seed: object

    def __post_init__(self) -> None:
        self.client_indices = [
            np.ascontiguousarray(idx, dtype=np.int64) for idx in self.client_indices
        ]
        seen: set[int] = set()
        for cid, idx in enumerate(self.client_indices):
            if idx.size == 0:
                raise ValueError(f"client {cid} received no rows")
            rows = set(int(i) for i in idx)
            if rows & seen:
                raise ValueError("client index lists overlap")
            seen |= rows

    @property
    def n_clients(self) -> int:
        return len(self.client_indices)

    def to_json(self) -> str:
        doc = {
            "alpha": self.alpha,
            "seed": self.seed,
            "clients": [idx.tolist() for idx in self.client_indices],
        }
        return json.dumps(doc, indent=2)


def dirichlet_partition(dataset: Dataset, n_clients: int, alpha: float, seed) -> PartitionSpec:
    """Split each class across clients by Dirichlet(alpha)-drawn proportions.

    Smaller alpha concentrates classes on few clients. If a draw leaves any
    client with zero rows overall, the whole set of class proportion vectors
    is redrawn (bounded retries) so every client keeps at least one row.
    """
    if dataset.labels is None:
        raise ValueError("partitioning needs a labeled dataset")
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if dataset.n < n_clients:
        raise ValueError(f"{dataset.n} rows cannot cover {n_clients} clients")
    rng = np.random.default_rng(seed)
    class_rows = [np.flatnonzero(dataset.labels == c) for c in range(dataset.num_classes)]
    for _ in range(MAX_REDRAWS):
        buckets: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
        for rows in class_rows:
            if rows.size == 0:
                continue
            shuffled = rng.permutation(rows)
            proportions = rng.dirichlet(np.full(n_clients, alpha))
            cuts = np.floor(np.cumsum(proportions) * rows.size).astype(np.int64)[:-1]
            for cid, part in enumerate(np.split(shuffled, cuts)):
                buckets[cid].append(part)
        per_client = [np.sort(np.concatenate(b)) if b else np.empty(0, np.int64) for b in buckets]
        if all(idx.size > 0 for idx in per_client):
            return PartitionSpec(
                client_indices=per_client,
                alpha=float(alpha),
                seed=seed if isinstance(seed, int) else [int(s) for s in seed],
            )
    raise RuntimeError(
        f"could not give every one of {n_clients} clients a row after "
        f"{MAX_REDRAWS} redraws (alpha={alpha}, n={dataset.n})"
    )


def proxy_class_counts(total: int, num_classes: int, minority_class: int) -> list[int]:
    """Per-class proxy counts: uniform except the minority at one-third.

    Solves majority * (C - 1) + majority / 3 ~= total under integrality, with
    the minority absorbing the rounding remainder.
    """
    if num_classes < 2:
        raise ValueError("proxy sampling needs at least 2 classes")
    if not 0 <= minority_class < num_classes:
        raise ValueError(f"minority_class {minority_class} out of range")
    majority = round(total / (num_classes - 1 + 1.0 / 3.0))
    minority = total - (num_classes - 1) * majority
    if majority <= 0 or minority <= 0:
        raise ValueError(f"total {total} too small for {num_classes} classes")
    counts = [majority] * num_classes
    counts[minority_class] = minority
    return counts


def sample_proxy(
    dataset: Dataset, total: int, minority_class: int, seed
) -> tuple[Dataset, Dataset]:
    """Draw the unlabeled server proxy set; returns (proxy, remainder).

    The remainder is the dataset minus the proxy rows, keeping proxy and
    client-visible data mutually exclusive by construction.
    """
    if dataset.labels is None:
        raise ValueError("proxy sampling needs a labeled dataset")
    counts = proxy_class_counts(total, dataset.num_classes, minority_class)
    rng = np.random.default_rng(seed)
    chosen: list[np.ndarray] = []
    for c, want in enumerate(counts):
        rows = np.flatnonzero(dataset.labels == c)
        if rows.size < want:
            raise ValueError(
                f"class {dataset.class_names[c]!r} has {rows.size} rows, proxy needs {want}"
            )
        chosen.append(rng.permutation(rows)[:want])
    proxy_idx = np.sort(np.concatenate(chosen))
    mask = np.ones(dataset.n, dtype=bool)
    mask[proxy_idx] = False
    remainder_idx = np.flatnonzero(mask)
    return dataset.subset(proxy_idx).without_labels(), dataset.subset(remainder_idx)
