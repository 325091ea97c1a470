"""Backend selection for the inner kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
NumPy implementations in ``_pykernels`` are used. Setting the environment
variable ``SINKDIFF_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

_impl = _pykernels
BACKEND = "python"

if os.environ.get("SINKDIFF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass


def _c(arr) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.float64)


def lse_step(log_k, log_a, log_b, x, backend=None):
    impl = get_backend(backend)
    return impl.lse_step(_c(log_k), _c(log_a), _c(log_b), _c(x))


def lse_log_plan(log_k, log_b, x, backend=None):
    impl = get_backend(backend)
    return impl.lse_log_plan(_c(log_k), _c(log_b), _c(x))


def max_log_cross_ratio(log_k, backend=None) -> float:
    impl = get_backend(backend)
    return float(impl.max_log_cross_ratio(_c(log_k)))


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (``"cython"``, ``"python"`` or default)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names
