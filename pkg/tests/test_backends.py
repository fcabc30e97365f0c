"""Cross-backend equivalence: the compiled kernels and the numpy twins must be
interchangeable to tight floating-point tolerance on identical inputs."""

import numpy as np
import pytest

import fedkd.backend as backend
from fedkd.nn import forward, init_params, fit_minibatches

pytest.importorskip("fedkd._kernels")


def run_on(name, fn):
    backend.use(name)
    return fn()


def test_selection_env_values():
    assert backend._select("numpy")[1] == "numpy"
    assert backend._select("cython")[1] == "cython"
    assert backend._select("auto")[1] in ("cython", "numpy")
    with pytest.raises(ValueError):
        backend._select("fortran")


def test_use_switches_module():
    assert backend.use("numpy") == "numpy"
    assert backend.active().__name__.endswith("_kernels_np")
    assert backend.use("cython") == "cython"
    assert backend.active().__name__.endswith("_kernels")


def test_forward_parity():
    rng = np.random.default_rng(0)
    p = init_params(33, 24, 7, 5)
    x = rng.normal(size=(57, 33))
    zc = run_on("cython", lambda: forward(p, x))
    zn = run_on("numpy", lambda: forward(p, x))
    assert np.allclose(zc, zn, rtol=1e-12, atol=1e-13)


def test_backward_parity():
    rng = np.random.default_rng(1)
    p = init_params(12, 10, 5, 6)
    x = rng.normal(size=(40, 12))
    g = rng.normal(size=(40, 5))
    from fedkd.nn import backward

    bc = run_on("cython", lambda: backward(p, x, g))
    bn = run_on("numpy", lambda: backward(p, x, g))
    for a, b in zip(bc.arrays(), bn.arrays()):
        assert np.allclose(a, b, rtol=1e-11, atol=1e-12)


def test_adam_parity():
    rng = np.random.default_rng(2)
    n = 1000
    args = lambda: (  # noqa: E731
        rng.normal(size=n).copy(), rng.normal(size=n).copy(),
        np.abs(rng.normal(size=n)), np.abs(rng.normal(size=n)),
    )
    rng = np.random.default_rng(2)
    p1, g1, m1, v1 = args()
    rng = np.random.default_rng(2)
    p2, g2, m2, v2 = args()
    backend.use("cython")
    backend.active().adam_update(p1, g1, m1, v1, 3, 0.01, 0.9, 0.999, 1e-8)
    backend.use("numpy")
    backend.active().adam_update(p2, g2, m2, v2, 3, 0.01, 0.9, 0.999, 1e-8)
    assert np.allclose(p1, p2, rtol=1e-12, atol=1e-14)
    assert np.allclose(m1, m2, rtol=1e-12, atol=1e-14)
    assert np.allclose(v1, v2, rtol=1e-12, atol=1e-14)


def test_training_run_parity():
    rng = np.random.default_rng(3)
    p = init_params(8, 16, 4, 9)
    x = rng.normal(size=(300, 8))
    y = rng.integers(0, 4, size=300)
    fit = lambda: fit_minibatches(  # noqa: E731
        p, x, y, epochs=3, batch_size=64, lr0=0.005, seed=[1, 2]
    )[0]
    tc = run_on("cython", fit)
    tn = run_on("numpy", fit)
    for a, b in zip(tc.arrays(), tn.arrays()):
        assert np.allclose(a, b, rtol=1e-9, atol=1e-11)
