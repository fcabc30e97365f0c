"""The communication round loop: client selection, synchronization, local
training, and sample-count-weighted model fusion, with an optional
distillation stage after fusion."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .distillation import DistillConfig, distill_round
from .metrics import RoundReport, evaluate
from .nn import AdamState, ModelParams, fit_minibatches, init_params
from .scenarios import ScenarioBundle

AGGREGATORS = ("fedavg", "flekd")


@dataclass
class ClientState:
    """One simulated client: its private data and current model."""

    id: int
    dataset: Dataset
    params: ModelParams
    adam: AdamState
    n_samples: int

    def __post_init__(self) -> None:
        if self.n_samples != self.dataset.n:
            raise ValueError(
                f"client {self.id}: n_samples {self.n_samples} != dataset rows {self.dataset.n}"
            )


@dataclass
class RoundConfig:
    """Knobs of the round loop itself."""

    total_rounds: int
    batch_size: int = 64
    n_clients: int = 9
    participation_fraction: float = 1.0
    local_epochs: int = 2
    lr0: float = 0.001
    lr_decay: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total_rounds < 0:
            raise ValueError(f"total_rounds must be >= 0, got {self.total_rounds}")
        if self.n_clients < 1 or self.batch_size < 1 or self.local_epochs < 0:
            raise ValueError("n_clients and batch_size must be positive, local_epochs >= 0")
        if not 0.0 < self.participation_fraction <= 1.0:
            raise ValueError(
                f"participation_fraction must lie in (0, 1], got {self.participation_fraction}"
            )


@dataclass
class ServerState:
    """The server's model and the per-round evaluation history."""

    global_params: ModelParams
    round: int = 0
    history: list[RoundReport] = field(default_factory=list)


def select_clients(
    all_clients: Sequence[ClientState], fraction: float, round_seed
) -> list[ClientState]:
    """Uniform sample without replacement of ceil(fraction * n) clients,
    returned in id order."""
    if not all_clients:
        raise ValueError("no clients to select from")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    k = math.ceil(fraction * len(all_clients))
    if k == len(all_clients):
        chosen = list(all_clients)
    else:
        rng = np.random.default_rng(round_seed)
        picks = rng.choice(len(all_clients), size=k, replace=False)
        chosen = [all_clients[i] for i in picks]
    return sorted(chosen, key=lambda c: c.id)


def local_train(
    client: ClientState,
    global_params: ModelParams,
    epochs: int,
    batch_size: int,
    *,
    lr0: float = 0.001,
    lr_decay: float = 0.05,
    round_index: int = 0,
    seed=0,
) -> ClientState:
    """Synchronize to the global model, then run local cross-entropy epochs.

    Adam moments restart from zero each round; the learning rate for the
    whole round is lr0 * (1 - lr_decay)^round_index. Batch order reshuffles
    per epoch from a (seed, round, client id) stream.
    """
    if client.dataset.n == 0:
        raise ValueError(f"client {client.id} has no training rows")
    if client.dataset.labels is None:
        raise ValueError(f"client {client.id} dataset is unlabeled")
    key = [seed] if isinstance(seed, int) else [int(s) for s in seed]
    params, adam = fit_minibatches(
        global_params,
        client.dataset.features,
        client.dataset.labels,
        epochs=epochs,
        batch_size=batch_size,
        lr0=lr0,
        decay=lr_decay,
        seed=[*key, round_index, client.id],
        start_tick=round_index,
    )
    return ClientState(
        id=client.id,
        dataset=client.dataset,
        params=params,
        adam=adam,
        n_samples=client.n_samples,
    )


def fuse_models(
    client_params_list: Sequence[ModelParams], client_sample_counts: Sequence[int]
) -> ModelParams:
    """Elementwise average weighted by sample counts.

    Computed as anchor + sum of weighted differences from the anchor, so
    fusing identical models reproduces them bit for bit.
    """
    if not client_params_list:
        raise ValueError("nothing to fuse")
    if len(client_params_list) != len(client_sample_counts):
        raise ValueError(
            f"{len(client_params_list)} models but {len(client_sample_counts)} counts"
        )
    counts = np.asarray(client_sample_counts, dtype=np.float64)
    if (counts <= 0).any():
        raise ValueError("sample counts must be positive")
    dims = client_params_list[0].dims
    for p in client_params_list[1:]:
        if p.dims != dims:
            raise ValueError(f"cannot fuse models of dims {p.dims} and {dims}")
    weights = counts / counts.sum()
    anchor = client_params_list[0]
    fused = [a.copy() for a in anchor.arrays()]
    for w, params in zip(weights, client_params_list):
        for acc, (arr, base) in zip(fused, zip(params.arrays(), anchor.arrays())):
            acc += w * (arr - base)
    return ModelParams.from_arrays(fused)


def run_rounds(
    bundle: ScenarioBundle,
    config: RoundConfig,
    aggregator: str,
    *,
    distill: Optional[DistillConfig] = None,
    hidden_dim: int = 128,
    init_seed=0,
    train_seed=0,
    fusion_uniform: bool = False,
    initial_params: Optional[ModelParams] = None,
) -> ServerState:
    """Execute the full federated loop and evaluate each round's global model.

    aggregator "fedavg" stops at fusion; "flekd" adds the ensemble
    distillation stage when its fine-tune epoch count is positive.
    """
    if aggregator not in AGGREGATORS:
        raise ValueError(f"unknown aggregator {aggregator!r}; expected one of {AGGREGATORS}")
    if aggregator == "flekd" and distill is None:
        raise ValueError("flekd needs a DistillConfig")
    canonical_dim = bundle.test.schema.canonical_dim
    num_classes = bundle.test.num_classes
    if initial_params is None:
        initial_params = init_params(canonical_dim, hidden_dim, num_classes, init_seed)
    clients = [
        ClientState(
            id=i,
            dataset=ds,
            params=initial_params.copy(),
            adam=AdamState.init(initial_params, lr0=config.lr0, decay=config.lr_decay),
            n_samples=ds.n,
        )
        for i, ds in enumerate(bundle.clients)
    ]
    train_key = [train_seed] if isinstance(train_seed, int) else [int(s) for s in train_seed]
    server = ServerState(global_params=initial_params.copy())
    fine_tune_ticks = 0
    for round_index in range(config.total_rounds):
        started = time.perf_counter()
        selected = select_clients(
            clients, config.participation_fraction, [*train_key, 302, round_index]
        )
        trained = []
        for client in selected:
            updated = local_train(
                client,
                server.global_params,
                config.local_epochs,
                config.batch_size,
                lr0=config.lr0,
                lr_decay=config.lr_decay,
                round_index=round_index,
                seed=train_key,
            )
            clients[updated.id] = updated
            trained.append(updated)
        counts = [1] * len(trained) if fusion_uniform else [c.n_samples for c in trained]
        fused = fuse_models([c.params for c in trained], counts)
        extra: dict = {}
        if aggregator == "flekd" and distill.fine_tune_epochs > 0:
            fused, stage = distill_round(
                fused,
                [c.params for c in trained],
                bundle.proxy,
                bundle.validation,
                distill,
                seed=[*train_key, 301, round_index],
                start_tick=fine_tune_ticks,
            )
            fine_tune_ticks += distill.fine_tune_epochs
            extra = {
                "ensemble_weights": stage.weights.weights.tolist(),
                "kl_before": stage.kl_before,
                "kl_after": stage.kl_after,
            }
        server.global_params = fused
        server.round = round_index + 1
        report = RoundReport.from_confusion(
            round_index, evaluate(server.global_params, bundle.test), **extra
        )
        report.wall_time = time.perf_counter() - started
        server.history.append(report)
    return server
