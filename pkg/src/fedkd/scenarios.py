"""Builders for the experiment layouts: a baseline split plus the three
heterogeneity scenarios (feature-width groups, sample-size groups, and
per-client dropped labels).

Every build starts from one labeled base dataset and carves it into disjoint
pieces: a held-out validation/test pair, the unlabeled proxy set, and the
per-client training sets. Column statistics for standardization come from the
client training rows only, then apply to every piece.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, Standardizer, pad_to_canonical, restrict_width, stratified_split
from .partition import PartitionSpec, dirichlet_partition, sample_proxy

KINDS = ("baseline", "dims", "sample_size", "drop_label")
SIZE_MULTIPLIERS = (1, 10, 100)


@dataclass(frozen=True)
class ScenarioSpec:
    """Which heterogeneity layout to build and its knobs.

    dims: clients form equal groups seeing only the first ``group_widths[g]``
    feature columns. sample_size: equal client groups whose training pools
    hold base_size, 10x, and 100x rows. drop_label: client k loses every row
    of class k (client count therefore equals the class count).
    """

    kind: str = "baseline"
    group_widths: tuple[int, ...] = (82, 79, 24)
    base_size: int = 64

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "group_widths", tuple(int(w) for w in self.group_widths))
        if self.kind == "dims":
            if not self.group_widths:
                raise ValueError("dims scenario needs at least one group width")
            if any(w <= 0 for w in self.group_widths):
                raise ValueError(f"group widths must be positive, got {self.group_widths}")
        if self.kind == "sample_size" and self.base_size <= 0:
            raise ValueError(f"base_size must be positive, got {self.base_size}")


@dataclass
class ScenarioBundle:
    """Everything one experiment needs, already split and standardized."""

    clients: list[Dataset]
    client_widths: list[int]
    proxy: Dataset
    validation: Dataset
    test: Dataset
    standardizer: Standardizer
    partition: PartitionSpec
    dropped_rows: int = 0
    groups: Optional[list[list[int]]] = field(default=None)

    @property
    def n_clients(self) -> int:
        return len(self.clients)


def eval_view(dataset: Dataset, width: int) -> Dataset:
    """The canonical-shaped view a width-limited model should be tested on:
    columns beyond ``width`` zeroed, same rows and labels."""
    if width == dataset.schema.canonical_dim:
        return dataset
    return pad_to_canonical(restrict_width(dataset, width))


def _seed_key(seed) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder split of ``total`` into len(weights) integer parts."""
    shares = total * weights / weights.sum()
    counts = np.floor(shares).astype(np.int64)
    remainder = int(total - counts.sum())
    order = np.argsort(-(shares - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts


def _stratified_take(dataset: Dataset, n_take: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Class-proportional sample of exactly n_take row indices; returns
    (taken, rest)."""
    per_class = np.bincount(dataset.labels, minlength=dataset.num_classes)
    counts = _apportion(n_take, per_class.astype(np.float64))
    taken: list[np.ndarray] = []
    rest: list[np.ndarray] = []
    for c, want in enumerate(counts):
        rows = np.flatnonzero(dataset.labels == c)
        if rows.size < want:
            raise ValueError(
                f"class {dataset.class_names[c]!r} has {rows.size} rows, group needs {want}"
            )
        order = rng.permutation(rows)
        taken.append(order[:want])
        rest.append(order[want:])
    return np.sort(np.concatenate(taken)), np.sort(np.concatenate(rest))


def _client_groups(n_clients: int, n_groups: int) -> list[list[int]]:
    if n_clients % n_groups != 0:
        raise ValueError(f"{n_clients} clients cannot form {n_groups} equal groups")
    size = n_clients // n_groups
    return [list(range(g * size, (g + 1) * size)) for g in range(n_groups)]


def build_scenario(
    spec: ScenarioSpec,
    base: Dataset,
    seed,
    *,
    n_clients: int,
    alpha: float,
    holdout_fraction: float = 1.0 / 3.0,
    proxy_total: int = 1260,
    minority_class: Optional[int] = None,
) -> ScenarioBundle:
    """Carve the base dataset into the scenario's client/server pieces.

    The held-out fraction is split 50/50 into validation (teacher scoring)
    and test (reporting); the proxy is drawn from the remainder, and clients
    partition what is left. All pieces are standardized with statistics fit
    on the union of client training rows.
    """
    if base.labels is None:
        raise ValueError("scenario building needs a labeled base dataset")
    if base.width != base.schema.canonical_dim:
        raise ValueError("base dataset must span the full canonical width")
    key = _seed_key(seed)
    num_classes = base.num_classes
    if minority_class is None:
        minority_class = num_classes - 1

    held, pool = stratified_split(base, holdout_fraction, [*key, 11])
    validation, test = stratified_split(held, 0.5, [*key, 12])
    proxy, pool = sample_proxy(pool, proxy_total, minority_class, [*key, 13])

    widths = [base.schema.canonical_dim] * n_clients
    dropped_rows = 0
    groups: Optional[list[list[int]]] = None

    if spec.kind == "sample_size":
        groups = _client_groups(n_clients, len(SIZE_MULTIPLIERS))
        need = spec.base_size * sum(SIZE_MULTIPLIERS)
        if need > pool.n:
            raise ValueError(
                f"sample_size scenario needs {need} client rows, pool has {pool.n}"
            )
        rng = np.random.default_rng([*key, 15])
        remaining = np.arange(pool.n)
        client_indices: list[np.ndarray] = [np.empty(0, np.int64)] * n_clients
        for g, mult in enumerate(SIZE_MULTIPLIERS):
            pool_view = pool.subset(remaining)
            taken, rest = _stratified_take(pool_view, spec.base_size * mult, rng)
            group_rows = remaining[taken]
            part = dirichlet_partition(
                pool.subset(group_rows), len(groups[g]), alpha, [*key, 14, g]
            )
            for slot, local_idx in zip(groups[g], part.client_indices):
                client_indices[slot] = group_rows[local_idx]
            remaining = remaining[rest]
        dropped_rows = remaining.size
        partition = PartitionSpec(client_indices=client_indices, alpha=float(alpha), seed=key)
    else:
        if spec.kind == "drop_label" and n_clients != num_classes:
            raise ValueError(
                f"drop_label runs one client per class: n_clients must be "
                f"{num_classes}, got {n_clients}"
            )
        partition = dirichlet_partition(pool, n_clients, alpha, [*key, 14])
        if spec.kind == "drop_label":
            kept: list[np.ndarray] = []
            for cid, idx in enumerate(partition.client_indices):
                keep = idx[pool.labels[idx] != cid]
                if keep.size == 0:
                    raise ValueError(
                        f"client {cid} has no rows left after dropping class "
                        f"{base.class_names[cid]!r}"
                    )
                dropped_rows += idx.size - keep.size
                kept.append(keep)
            partition = PartitionSpec(client_indices=kept, alpha=float(alpha), seed=key)
        elif spec.kind == "dims":
            groups = _client_groups(n_clients, len(spec.group_widths))
            for g, width in enumerate(spec.group_widths):
                if width > base.schema.canonical_dim:
                    raise ValueError(
                        f"group width {width} exceeds canonical dimension "
                        f"{base.schema.canonical_dim}"
                    )
                for slot in groups[g]:
                    widths[slot] = width

    train_rows = np.concatenate(partition.client_indices)
    scaler = Standardizer.fit(pool.features[train_rows])
    pool = scaler.apply(pool)

    clients = []
    for cid, idx in enumerate(partition.client_indices):
        ds = pool.subset(idx)
        if widths[cid] < base.schema.canonical_dim:
            ds = pad_to_canonical(restrict_width(ds, widths[cid]))
        clients.append(ds)

    return ScenarioBundle(
        clients=clients,
        client_widths=widths,
        proxy=scaler.apply(proxy),
        validation=scaler.apply(validation),
        test=scaler.apply(test),
        standardizer=scaler,
        partition=partition,
        dropped_rows=dropped_rows,
        groups=groups,
    )
