"""Kernel backend selection.

The hot assembly kernels exist twice: a numba-jitted version and a pure
numpy fallback.  ``PIDEFEM_BACKEND`` selects one at import time
(``numba`` when available, otherwise ``numpy``); :func:`use` switches at
runtime, e.g. for the backend benchmark or in tests.
"""

import os
from contextlib import contextmanager

from . import _numpy

try:
    from . import _numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    HAS_NUMBA = False

_BACKENDS = {"numpy": _numpy}
if HAS_NUMBA:
    _BACKENDS["numba"] = _numba


def _default():
    name = os.environ.get("PIDEFEM_BACKEND", "").strip().lower()
    if name:
        if name not in _BACKENDS:
            raise ValueError(
                f"PIDEFEM_BACKEND={name!r} is not available; "
                f"choose from {sorted(_BACKENDS)}"
            )
        return _BACKENDS[name]
    return _BACKENDS["numba"] if HAS_NUMBA else _BACKENDS["numpy"]


_active = _default()


def get():
    """Module implementing the active kernel set."""
    return _active


def get_backend(name: str):
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_BACKENDS)}")
    return _BACKENDS[name]


def available() -> list:
    return sorted(_BACKENDS)


@contextmanager
def use(name: str):
    """Temporarily switch the active backend."""
    global _active
    previous = _active
    _active = get_backend(name)
    try:
        yield _active
    finally:
        _active = previous
