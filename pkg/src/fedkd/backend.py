"""Kernel backend selection.

The compiled extension (``fedkd._kernels``) is preferred when it built;
otherwise the numpy twin is used. ``FEDKD_BACKEND`` forces the choice:
``auto`` (default), ``cython``, or ``numpy``.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_np

_active: ModuleType | None = None
_name: str | None = None


def _select(requested: str) -> tuple[ModuleType, str]:
    if requested not in ("auto", "cython", "numpy"):
        raise ValueError(f"unknown backend {requested!r}; expected auto, cython, or numpy")
    if requested == "numpy":
        return _kernels_np, "numpy"
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        if requested == "cython":
            raise RuntimeError(
                "compiled kernels unavailable; build the extension or set FEDKD_BACKEND=numpy"
            ) from None
        return _kernels_np, "numpy"
    return _kernels, "cython"


def active() -> ModuleType:
    """The kernel module in use, selecting one on first call."""
    global _active, _name
    if _active is None:
        _active, _name = _select(os.environ.get("FEDKD_BACKEND", "auto").lower())
    return _active


def name() -> str:
    active()
    assert _name is not None
    return _name


def use(requested: str) -> str:
    """Force a backend (testing/benchmark hook). Returns the resulting name."""
    global _active, _name
    _active, _name = _select(requested)
    return _name
