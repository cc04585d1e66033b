"""Sparse Krylov solvers and the Newton iteration for the per-step systems.

Conjugate gradients for the SPD fine-grid systems, BiCGStab (with an
optional restarted-GMRES fallback) for the nonsymmetric ones, and a full
Newton driver with analytic Jacobians.  The Krylov iteration loops are
backend kernels (numba-jitted with a numpy fallback); both methods apply
symmetric Jacobi scaling and certify convergence on the true residual of
the original system.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from . import backends

__all__ = [
    "SolverConfig",
    "SolverError",
    "NewtonError",
    "solve_spd",
    "solve_nonsymmetric",
    "newton_solve",
]


class SolverError(RuntimeError):
    """Linear solver failure; carries the final relative residual."""

    def __init__(self, message: str, residual: float = np.nan):
        super().__init__(message)
        self.residual = residual


class NewtonError(RuntimeError):
    """Newton failure; carries the last residual norm and iteration count."""

    def __init__(self, message: str, residual_norm: float, iterations: int):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterations = iterations


@dataclass
class SolverConfig:
    linear_tol: float = 1e-10
    linear_max_iters: int = 20000
    newton_tol: float = 1e-10
    newton_max_iters: int = 30
    nonsymmetric_method: str = "bicgstab"
    gmres_fallback: bool = True
    jacobi_scaling: bool = True

    def __post_init__(self):
        if self.linear_tol <= 0 or self.newton_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.linear_max_iters < 1 or self.newton_max_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.nonsymmetric_method not in ("bicgstab", "gmres_restarted"):
            raise ValueError(
                f"unknown nonsymmetric method {self.nonsymmetric_method!r}"
            )


def _bump(stats: Optional[dict], key: str, amount: int):
    if stats is not None:
        stats[key] = stats.get(key, 0) + amount


def _prepared(matrix, rhs, scale_enabled):
    """Canonical CSR + symmetric Jacobi scaling: (A0, b0, A, b, back)."""
    A0 = sparse.csr_matrix(matrix)
    b0 = np.asarray(rhs, dtype=float)
    if not scale_enabled:
        return A0, b0, A0, b0, lambda y: y
    d = A0.diagonal()
    d = np.where(np.abs(d) > 0, np.abs(d), 1.0)
    s = 1.0 / np.sqrt(d)
    A = (sparse.diags(s) @ A0 @ sparse.diags(s)).tocsr()
    return A0, b0, A, b0 * s, lambda y: y * s


def _check_converged(matrix, rhs, x, tol, method):
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.linalg.norm(matrix @ x)
    res = np.linalg.norm(rhs - matrix @ x) / bnorm
    if not res <= tol * 10.0:
        # Factor 10 tolerates recursion-residual drift right at the
        # tolerance; larger gaps are genuine failures.
        raise SolverError(
            f"{method} converged in recursion but true relative residual "
            f"is {res:.3e} > tol {tol:.1e}", res
        )
    return res


def solve_spd(
    matrix: sparse.spmatrix,
    rhs: np.ndarray,
    config: Optional[SolverConfig] = None,
    stats: Optional[dict] = None,
) -> np.ndarray:
    """Conjugate gradients for an SPD system.

    Deterministic for fixed inputs.  Raises :class:`SolverError` on
    iteration-cap overrun or detected indefiniteness (nonpositive
    curvature).
    """
    config = config or SolverConfig()
    A0, b0, A, b, back = _prepared(matrix, rhs, config.jacobi_scaling)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    x, iters, status = backends.get().cg_kernel(
        A.indptr, A.indices, A.data, b,
        config.linear_tol * bnorm, config.linear_max_iters,
    )
    if status == 3:
        raise SolverError(
            "matrix is not positive definite (nonpositive curvature in CG)",
            np.linalg.norm(b - A @ x) / bnorm,
        )
    if status == 1:
        raise SolverError(
            f"CG did not converge in {config.linear_max_iters} iterations "
            f"(relative residual {np.linalg.norm(b - A @ x) / bnorm:.3e})",
            np.linalg.norm(b - A @ x) / bnorm,
        )
    _bump(stats, "linear_iters", int(iters))
    x = back(x)
    _check_converged(A0, b0, x, config.linear_tol, "CG")
    return x


def _gmres(A, b, tol, max_iters):
    restart = min(100, A.shape[0])
    x, info = spla.gmres(
        A, b, rtol=tol, atol=0.0, restart=restart,
        maxiter=max(1, max_iters // restart),
    )
    if info != 0:
        res = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
        raise SolverError(f"restarted GMRES failed (info={info})", res)
    return x, max_iters


def solve_nonsymmetric(
    matrix: sparse.spmatrix,
    rhs: np.ndarray,
    config: Optional[SolverConfig] = None,
    stats: Optional[dict] = None,
) -> np.ndarray:
    """Krylov solve of a nonsingular, generally nonsymmetric system.

    Uses the configured method (BiCGStab by default) and, when enabled,
    falls back to restarted GMRES on breakdown or stagnation.
    """
    config = config or SolverConfig()
    A0, b0, A, b, back = _prepared(matrix, rhs, config.jacobi_scaling)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)

    methods = [config.nonsymmetric_method]
    if config.gmres_fallback and config.nonsymmetric_method == "bicgstab":
        methods.append("gmres_restarted")
    last_error = None
    for method in methods:
        try:
            if method == "bicgstab":
                x, iters, status = backends.get().bicgstab_kernel(
                    A.indptr, A.indices, A.data, b,
                    config.linear_tol * bnorm, config.linear_max_iters,
                )
                res = np.linalg.norm(b - A @ x) / bnorm
                if status == 2:
                    raise SolverError(
                        f"BiCGStab breakdown at iteration {iters}", res)
                if status == 1:
                    raise SolverError(
                        f"BiCGStab did not converge in "
                        f"{config.linear_max_iters} iterations "
                        f"(relative residual {res:.3e})", res)
            else:
                x, iters = _gmres(A, b, config.linear_tol,
                                  config.linear_max_iters)
            x = back(x)
            _check_converged(A0, b0, x, config.linear_tol, method)
            _bump(stats, "linear_iters", int(iters))
            return x
        except SolverError as err:
            last_error = err
    raise last_error


def newton_solve(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian_fn: Callable[[np.ndarray], sparse.spmatrix],
    initial_guess: np.ndarray,
    config: Optional[SolverConfig] = None,
    linear_solver: Optional[Callable] = None,
    stats: Optional[dict] = None,
):
    """Full Newton iteration with analytic Jacobian.

    Stops once the increment 2-norm drops below ``newton_tol``; the
    initial guess is expected to sit in the basin (previous time level in
    the stepping drivers).  When a ``stats`` dict is supplied, the
    per-iteration increment norms of the last call are stored under
    ``newton_increments``.

    Returns
    -------
    (x, iterations)

    Raises
    ------
    NewtonError
        When the iteration cap is reached; carries the last residual norm.
    """
    config = config or SolverConfig()
    solve = linear_solver or solve_nonsymmetric
    x = np.array(initial_guess, dtype=float, copy=True)
    res = np.asarray(residual_fn(x), dtype=float)
    res_norm = np.linalg.norm(res)
    increments = []
    if stats is not None:
        stats["newton_increments"] = increments
    if res_norm == 0.0:
        return x, 0
    for it in range(1, config.newton_max_iters + 1):
        J = jacobian_fn(x)
        delta = solve(J, -res, config, stats=stats)
        x += delta
        res = np.asarray(residual_fn(x), dtype=float)
        res_norm = np.linalg.norm(res)
        increments.append(float(np.linalg.norm(delta)))
        if increments[-1] <= config.newton_tol:
            _bump(stats, "newton_iters", it)
            return x, it
    raise NewtonError(
        f"Newton did not converge in {config.newton_max_iters} iterations "
        f"(last residual norm {res_norm:.3e})",
        res_norm, config.newton_max_iters,
    )
