"""Pure-numpy training kernels; the fallback twin of the compiled ``fedkd._kernels``.

Both modules expose the same three functions with identical semantics:
all arrays are C-contiguous float64, outputs are written into caller-owned
buffers, and ``adam_update`` mutates its first four arguments in place.
"""

from __future__ import annotations

import numpy as np


def mlp_forward(x, w1, b1, w2, b2, w3, b3, h1, h2, out):
    """Fused 3-layer forward pass: h1/h2 get the post-ReLU activations, out the logits."""
    np.matmul(x, w1.T, out=h1)
    h1 += b1
    np.maximum(h1, 0.0, out=h1)
    np.matmul(h1, w2.T, out=h2)
    h2 += b2
    np.maximum(h2, 0.0, out=h2)
    np.matmul(h2, w3.T, out=out)
    out += b3


def mlp_backward(x, h1, h2, w2, w3, g, d1, d2, gw1, gb1, gw2, gb2, gw3, gb3):
    """Backward pass for the fused forward; g is the loss gradient wrt logits."""
    np.matmul(g.T, h2, out=gw3)
    np.sum(g, axis=0, out=gb3)
    np.matmul(g, w3, out=d2)
    d2 *= h2 > 0.0
    np.matmul(d2.T, h1, out=gw2)
    np.sum(d2, axis=0, out=gb2)
    np.matmul(d2, w2, out=d1)
    d1 *= h1 > 0.0
    np.matmul(d1.T, x, out=gw1)
    np.sum(d1, axis=0, out=gb1)


def adam_update(p, g, m, v, step, lr, beta1, beta2, eps):
    """One bias-corrected Adam step over flat views; p, m, v updated in place."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
