"""Memory-quadrature weights and cached history of assembled vectors.

The Volterra integral ``int_0^{t_n} K(t_n - s) g(s) ds`` is approximated
by ``dt * sum_{i=1..n} w_ni g(t_i)`` with right-rectangle convolution
weights ``w_ni = K(t_n - t_i)``.  The rule is first order for smooth
kernels, has ``w_nn = K(0) != 0`` (so every step is fully implicit) and
bounded weights ``|w_ni| <= max|K|``.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

__all__ = ["MemoryWeights", "MemoryHistory"]


class MemoryWeights:
    """Right-rectangle convolution weights for a kernel and step size.

    Weights for one step are O(n) to recompute, so they are generated on
    demand instead of being stored as an O(N^2) triangular array.
    """

    rule = "right_rectangle"

    def __init__(self, kernel: Callable, dt: float):
        if dt <= 0:
            raise ValueError("time step must be positive")
        k0 = float(np.asarray(kernel(np.zeros(1)))[0])
        if k0 == 0.0:
            raise ValueError(
                "kernel has K(0) = 0; the fully implicit quadrature needs "
                "a nonzero diagonal weight w_nn = K(0)"
            )
        self.kernel = kernel
        self.dt = float(dt)
        self.bound_K1 = abs(k0)

    def for_step(self, n: int) -> np.ndarray:
        """Weights ``w_ni = K(t_n - t_i)`` for ``i = 1..n`` (array index i-1)."""
        if n < 1:
            raise ValueError("step index must be >= 1")
        lags = self.dt * np.arange(n - 1, -1, -1, dtype=float)
        w = np.asarray(self.kernel(lags), dtype=float)
        self.bound_K1 = max(self.bound_K1, float(np.max(np.abs(w))))
        return w


def weights_for_step(mw: MemoryWeights, n: int) -> np.ndarray:
    return mw.for_step(n)


class MemoryHistory:
    """Per-time-level cache of vectors entering the memory sum.

    ``fine_history`` mode stores the assembled memory load vector of each
    committed level (what the standard scheme and the first two two-grid
    drivers need).  ``coarse_only`` mode stores coarse-grid vectors only;
    no fine-grid vector is ever retained, which realises the storage
    economisation of the lower-order two-grid driver.  Entries are
    immutable once written and the instrumentation counters feed the
    benchmark report.
    """

    def __init__(self, mode: str = "fine_history", length: Optional[int] = None):
        if mode not in ("fine_history", "coarse_only"):
            raise ValueError(f"unknown history mode {mode!r}")
        self.mode = mode
        self.length = length
        self._entries: list[np.ndarray] = []
        self.peak_bytes = 0

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entry_count(self) -> int:
        return len(self._entries)

    @property
    def nbytes(self) -> int:
        return sum(e.nbytes for e in self._entries)

    def append(self, level: int, entry: np.ndarray):
        """Commit the vector of time level ``level`` (levels count from 1)."""
        if level != len(self._entries) + 1:
            raise ValueError(
                f"history gap: expected level {len(self._entries) + 1}, "
                f"got {level}"
            )
        entry = np.array(entry, dtype=float, copy=True)
        if self.length is not None and entry.shape != (self.length,):
            raise ValueError(
                f"entry length {entry.shape} does not match history width "
                f"{self.length}"
            )
        entry.setflags(write=False)
        self._entries.append(entry)
        self.peak_bytes = max(self.peak_bytes, self.nbytes)

    def entry(self, level: int) -> np.ndarray:
        if not 1 <= level <= len(self._entries):
            raise KeyError(f"no history entry for level {level}")
        return self._entries[level - 1]

    def accumulate(self, weights: np.ndarray, dt: float, upto: int) -> np.ndarray:
        """``dt * sum_{i=1..upto} weights[i-1] * entry_i``.

        A pure linear combination of the cached vectors; nothing is
        re-assembled.  ``upto = 0`` yields a zero vector.
        """
        weights = np.asarray(weights, dtype=float)
        if len(weights) < upto:
            raise ValueError(f"need {upto} weights, got {len(weights)}")
        if upto > len(self._entries):
            missing = len(self._entries) + 1
            raise ValueError(
                f"history entry for level {missing} is missing "
                f"(requested sum up to {upto})"
            )
        width = self.length if self.length is not None else (
            len(self._entries[0]) if self._entries else 0
        )
        out = np.zeros(width)
        for i in range(upto):
            out += weights[i] * self._entries[i]
        out *= dt
        return out


def accumulate_memory(history: MemoryHistory, weights, dt: float, upto: int):
    return history.accumulate(weights, dt, upto)
