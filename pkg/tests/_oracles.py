"""Independent reference implementations used as test oracles.

Deliberately naive: per-row loops and scalar recurrences, sharing no code with
the package under test.
"""

import numpy as np


def mlp_reference(weights, biases, x):
    """Straight-line per-row evaluation of the 3-layer ReLU net."""
    w1, w2, w3 = weights
    b1, b2, b3 = biases
    out = np.zeros((x.shape[0], w3.shape[0]))
    for r in range(x.shape[0]):
        h1 = np.maximum(w1 @ x[r] + b1, 0.0)
        h2 = np.maximum(w2 @ h1 + b2, 0.0)
        out[r] = w3 @ h2 + b3
    return out


def fd_grad(fn, a, h=1e-5):
    """Central finite differences of the scalar fn() wrt every entry of a.

    a is perturbed in place and restored, so fn may close over it.
    """
    grad = np.zeros_like(a)
    flat = a.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn()
        flat[i] = orig - h
        down = fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def rel_err(a, b):
    """Norm-based relative disagreement between two same-shaped arrays."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-300)
    return float(np.linalg.norm(a - b)) / denom


def adam_scalar_trace(grads, lrs, beta1=0.9, beta2=0.999, eps=1e-8, p0=0.0):
    """Scalar Adam recurrence; returns the parameter value after each step."""
    m = v = 0.0
    p = p0
    trace = []
    for step, (g, lr) in enumerate(zip(grads, lrs), start=1):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1**step)
        vhat = v / (1.0 - beta2**step)
        p -= lr * mhat / (vhat**0.5 + eps)
        trace.append(p)
    return trace
