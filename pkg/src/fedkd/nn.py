"""Feed-forward network engine.

A fixed 3-layer MLP (two ReLU layers, linear output) with hand-derived
gradients, temperature softmax, cross-entropy and teacher-led KL losses, and
Adam with a decaying learning rate. Everything runs in float64 and every
function is deterministic given its inputs; the only RNG use is the explicit
seed passed to :func:`init_params` and :func:`fit_minibatches`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import backend

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def _as_matrix(a, name: str) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got shape {out.shape}")
    return out


def _seed_key(seed) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


@dataclass
class ModelParams:
    """Weights and biases of the 3-layer MLP.

    Weight matrices are (out, in); the forward map is
    ``w3 @ relu(w2 @ relu(w1 @ x + b1) + b2) + b3`` applied per row.
    """

    weights: tuple[np.ndarray, np.ndarray, np.ndarray]
    biases: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self) -> None:
        ws = tuple(np.ascontiguousarray(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.ascontiguousarray(b, dtype=np.float64) for b in self.biases)
        if len(ws) != 3 or len(bs) != 3:
            raise ValueError("expected exactly 3 weight matrices and 3 bias vectors")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i > 0 and w.shape[1] != ws[i - 1].shape[0]:
                raise ValueError(
                    f"layer {i} expects {w.shape[1]} inputs but layer {i - 1} emits "
                    f"{ws[i - 1].shape[0]}"
                )
        for a in (*ws, *bs):
            if not np.isfinite(a).all():
                raise ValueError("parameter entries must be finite")
        self.weights = ws
        self.biases = bs

    @property
    def dims(self) -> tuple[int, int, int]:
        """(input_dim, hidden_dim, num_classes)."""
        return (
            self.weights[0].shape[1],
            self.weights[0].shape[0],
            self.weights[2].shape[0],
        )

    def arrays(self) -> list[np.ndarray]:
        """The six parameter arrays in (w1, b1, w2, b2, w3, b3) order."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "ModelParams":
        if len(arrays) != 6:
            raise ValueError(f"expected 6 arrays, got {len(arrays)}")
        return cls(
            weights=(arrays[0], arrays[2], arrays[4]),
            biases=(arrays[1], arrays[3], arrays[5]),
        )

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays([a.copy() for a in self.arrays()])


@dataclass
class AdamState:
    """Adam moment estimates plus the schedule constants they belong to."""

    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS
    lr0: float = 0.001
    decay: float = 0.05

    @classmethod
    def init(
        cls,
        params: ModelParams,
        lr0: float = 0.001,
        decay: float = 0.05,
        beta1: float = BETA1,
        beta2: float = BETA2,
        eps: float = EPS,
    ) -> "AdamState":
        return cls(
            step=0,
            m=[np.zeros_like(a) for a in params.arrays()],
            v=[np.zeros_like(a) for a in params.arrays()],
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            lr0=lr0,
            decay=decay,
        )


def init_params(input_dim: int, hidden_dim: int, num_classes: int, seed) -> ModelParams:
    """Glorot-uniform weights, zero biases; deterministic for a fixed seed."""
    if input_dim <= 0 or hidden_dim <= 0 or num_classes <= 0:
        raise ValueError(
            f"dimensions must be positive, got ({input_dim}, {hidden_dim}, {num_classes})"
        )
    rng = np.random.default_rng(seed)

    def draw(out_dim: int, in_dim: int) -> np.ndarray:
        limit = math.sqrt(6.0 / (in_dim + out_dim))
        return rng.uniform(-limit, limit, size=(out_dim, in_dim))

    return ModelParams(
        weights=(
            draw(hidden_dim, input_dim),
            draw(hidden_dim, hidden_dim),
            draw(num_classes, hidden_dim),
        ),
        biases=(
            np.zeros(hidden_dim),
            np.zeros(hidden_dim),
            np.zeros(num_classes),
        ),
    )


def _forward_cached(
    params: ModelParams, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Post-ReLU activations are kept because backward needs them as masks.
    _, hidden, n_classes = params.dims
    n = x.shape[0]
    h1 = np.zeros((n, hidden))
    h2 = np.zeros((n, hidden))
    out = np.zeros((n, n_classes))
    backend.active().mlp_forward(x, *params.arrays(), h1, h2, out)
    return h1, h2, out


def forward(params: ModelParams, batch) -> np.ndarray:
    """Logits for a batch of rows, shape (n, num_classes)."""
    x = _as_matrix(batch, "batch")
    if x.shape[1] != params.dims[0]:
        raise ValueError(f"batch has {x.shape[1]} columns, model expects {params.dims[0]}")
    return _forward_cached(params, x)[2]


def softmax_temp(logits, temperature: float = 1.0) -> np.ndarray:
    """Temperature softmax along the last axis, overflow-safe via max shift."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy_loss(logits, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient wrt the logits.

    grad = (softmax(logits) - onehot(labels)) / n.
    """
    z = np.asarray(logits, dtype=np.float64)
    squeeze = z.ndim == 1
    z = np.atleast_2d(z)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, n_classes = z.shape
    if y.shape[0] != n:
        raise ValueError(f"{n} logit rows but {y.shape[0]} labels")
    if n == 0:
        raise ValueError("empty batch")
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    logp = _log_softmax(z)
    loss = -float(logp[np.arange(n), y].mean())
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, grad[0] if squeeze else grad


def kl_distill_loss(
    student_logits, teacher_logits, temperature: float
) -> tuple[float, np.ndarray]:
    """Mean KL(teacher || student) between temperature softmaxes.

    The teacher is a constant: the gradient flows only through the student,
    grad = (p_student - p_teacher) / (temperature * n). No extra scaling is
    applied on top of that.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    zs = np.asarray(student_logits, dtype=np.float64)
    zt = np.asarray(teacher_logits, dtype=np.float64)
    if zs.shape != zt.shape:
        raise ValueError(f"student shape {zs.shape} != teacher shape {zt.shape}")
    squeeze = zs.ndim == 1
    zs = np.atleast_2d(zs)
    zt = np.atleast_2d(zt)
    n = zs.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    logp_s = _log_softmax(zs / temperature)
    logp_t = _log_softmax(zt / temperature)
    p_t = np.exp(logp_t)
    # p*log(p/q) with the 0*log(0) = 0 convention for underflowed teacher mass
    terms = np.where(p_t > 0.0, p_t * (logp_t - logp_s), 0.0)
    loss = float(terms.sum(axis=-1).mean())
    grad = (np.exp(logp_s) - p_t) / (temperature * n)
    return loss, grad[0] if squeeze else grad


def backward(params: ModelParams, batch, grad_logits) -> ModelParams:
    """Parameter gradients for the given upstream logit gradient.

    Activations are recomputed from the batch; the result is packaged in a
    ModelParams so it can be walked in lock-step with the parameters.
    """
    x = _as_matrix(batch, "batch")
    g = _as_matrix(grad_logits, "grad_logits")
    d_in, hidden, n_classes = params.dims
    if x.shape[1] != d_in:
        raise ValueError(f"batch has {x.shape[1]} columns, model expects {d_in}")
    if g.shape != (x.shape[0], n_classes):
        raise ValueError(
            f"grad_logits shape {g.shape} does not match ({x.shape[0]}, {n_classes})"
        )
    h1, h2, _ = _forward_cached(params, x)
    n = x.shape[0]
    d1 = np.zeros((n, hidden))
    d2 = np.zeros((n, hidden))
    grads = [np.zeros_like(a) for a in params.arrays()]
    if n:
        backend.active().mlp_backward(
            x, h1, h2, params.weights[1], params.weights[2], g, d1, d2, *grads
        )
    return ModelParams.from_arrays(grads)


def adam_step(
    params: ModelParams, grads: ModelParams, state: AdamState, ticks: int = 0
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update at lr = lr0 * (1 - decay)^ticks.

    Pure: returns fresh params and state, inputs untouched.
    """
    if grads.dims != params.dims:
        raise ValueError(f"grads dims {grads.dims} != params dims {params.dims}")
    new_arrays = [a.copy() for a in params.arrays()]
    new_m = [a.copy() for a in state.m]
    new_v = [a.copy() for a in state.v]
    step = state.step + 1
    lr = state.lr0 * (1.0 - state.decay) ** ticks
    kern = backend.active()
    for p, g, m, v in zip(new_arrays, grads.arrays(), new_m, new_v):
        kern.adam_update(
            p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1),
            step, lr, state.beta1, state.beta2, state.eps,
        )
    new_state = AdamState(
        step=step, m=new_m, v=new_v,
        beta1=state.beta1, beta2=state.beta2, eps=state.eps,
        lr0=state.lr0, decay=state.decay,
    )
    return ModelParams.from_arrays(new_arrays), new_state


def _softmax_into(z: np.ndarray, temperature: float, out: np.ndarray) -> None:
    np.divide(z, temperature, out=out)
    out -= out.max(axis=1, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=1, keepdims=True)


def fit_minibatches(
    params: ModelParams,
    x,
    target,
    *,
    objective: str = "cross_entropy",
    temperature: float = 1.0,
    epochs: int,
    batch_size: int,
    lr0: float = 0.001,
    decay: float = 0.05,
    seed,
    start_tick: int = 0,
    tick_per_epoch: bool = False,
) -> tuple[ModelParams, AdamState]:
    """Mini-batch Adam over one of the two training objectives.

    objective "cross_entropy" takes integer labels as target; "kl" takes fixed
    teacher logits and matches them under the given temperature. Rows are
    reshuffled every epoch with a generator keyed on (seed, epoch). Adam
    moments start at zero for every call; the decayed learning rate is
    lr0 * (1 - decay)^start_tick, advancing once per epoch when
    ``tick_per_epoch`` is set (the caller owns the tick convention otherwise).
    Returns the trained parameters and the optimizer state they ended with.
    """
    xs = _as_matrix(x, "x")
    d_in, hidden, n_classes = params.dims
    n = xs.shape[0]
    if xs.shape[1] != d_in:
        raise ValueError(f"x has {xs.shape[1]} columns, model expects {d_in}")
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    if batch_size <= 0:
        raise ValueError(f"batch_size must be positive, got {batch_size}")
    if objective == "cross_entropy":
        labels = np.ascontiguousarray(target, dtype=np.int64)
        if labels.shape != (n,):
            raise ValueError(f"labels shape {labels.shape} does not match {n} rows")
        if n and (labels.min() < 0 or labels.max() >= n_classes):
            raise ValueError(f"labels must lie in [0, {n_classes})")
    elif objective == "kl":
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        teacher = _as_matrix(target, "teacher logits")
        if teacher.shape != (n, n_classes):
            raise ValueError(
                f"teacher logits shape {teacher.shape} does not match ({n}, {n_classes})"
            )
        # Teachers are frozen, so their temperature softmax is loop-invariant.
        teacher_probs = softmax_temp(teacher, temperature) if n else teacher
    else:
        raise ValueError(f"unknown objective {objective!r}")

    if epochs == 0 or n == 0:
        return params.copy(), AdamState.init(params, lr0=lr0, decay=decay)

    kern = backend.active()
    arrays = [a.copy() for a in params.arrays()]
    w1, b1, w2, b2, w3, b3 = arrays
    grads = [np.zeros_like(a) for a in arrays]
    moments = [np.zeros_like(a) for a in arrays]
    velocities = [np.zeros_like(a) for a in arrays]
    flat = [
        (p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1))
        for p, g, m, v in zip(arrays, grads, moments, velocities)
    ]

    bmax = min(batch_size, n)
    xb = np.zeros((bmax, d_in))
    h1 = np.zeros((bmax, hidden))
    h2 = np.zeros((bmax, hidden))
    out = np.zeros((bmax, n_classes))
    gl = np.zeros((bmax, n_classes))
    d1 = np.zeros((bmax, hidden))
    d2 = np.zeros((bmax, hidden))
    if objective == "cross_entropy":
        yb = np.zeros(bmax, dtype=np.int64)
    else:
        tb = np.zeros((bmax, n_classes))
    rows = np.arange(bmax)

    key = _seed_key(seed)
    step = 0
    for epoch in range(epochs):
        tick = start_tick + (epoch if tick_per_epoch else 0)
        lr = lr0 * (1.0 - decay) ** tick
        order = np.random.default_rng([*key, epoch]).permutation(n)
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            bs = idx.shape[0]
            np.take(xs, idx, axis=0, out=xb[:bs])
            kern.mlp_forward(xb[:bs], w1, b1, w2, b2, w3, b3, h1[:bs], h2[:bs], out[:bs])
            gb = gl[:bs]
            if objective == "cross_entropy":
                np.take(labels, idx, out=yb[:bs])
                _softmax_into(out[:bs], 1.0, gb)
                gb[rows[:bs], yb[:bs]] -= 1.0
                gb /= bs
            else:
                np.take(teacher_probs, idx, axis=0, out=tb[:bs])
                _softmax_into(out[:bs], temperature, gb)
                gb -= tb[:bs]
                gb /= temperature * bs
            kern.mlp_backward(
                xb[:bs], h1[:bs], h2[:bs], w2, w3, gb, d1[:bs], d2[:bs], *grads
            )
            step += 1
            for p, g, m, v in flat:
                kern.adam_update(p, g, m, v, step, lr, BETA1, BETA2, EPS)
    state = AdamState(
        step=step, m=moments, v=velocities, lr0=lr0, decay=decay,
        beta1=BETA1, beta2=BETA2, eps=EPS,
    )
    return ModelParams.from_arrays(arrays), state
