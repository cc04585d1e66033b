"""Shipped problem definitions and manufactured-solution forcing.

The main test case is the nonlinear-memory problem of the convergence
study: unit square, ``K(t) = exp(-t)``, ``alpha = 0``,
``beta(u) = (sin u, 1 - cos u)``, ``gamma(u) = (1 - cos u, sin u)``,
``g(u) = sin u`` and exact solution
``u = x1 (1 - x1) x2 (1 - x2) exp(-t)``.

Two forcing modes are available.  ``paper``: the closed form published
with the study, whose two non-elementary time integrals are evaluated by
Gauss-Legendre panels.  ``operator``: the forcing is manufactured
directly as ``u_t + A u + int_0^t K(t-s) B u(s) ds`` from the exact
solution, with the memory integral evaluated by the same panels.  The
two agree to quadrature accuracy and cross-validate each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import ProblemSpec, identity_diffusion
from .quadrature import gauss_legendre_panels

__all__ = [
    "ManufacturedProblem",
    "StabilityConstants",
    "forcing_value",
    "section5_problem",
    "section5_manufactured",
    "section5_constants",
    "heat_problem",
    "make_problem",
    "PROBLEM_NAMES",
]

GL_ORDER = 12


@dataclass
class StabilityConstants:
    """Analytic constants entering the a-priori stability bound."""

    nu0: float
    mu0: float
    K1: float


@dataclass
class ManufacturedProblem:
    """Exact solution data from which a consistent forcing is built.

    ``paper_formula`` is the published closed form (only available for
    the shipped nonlinear-memory case); ``operator_derived`` works for
    any problem with ``alpha = 0`` given the exact solution, gradient,
    Laplacian and time derivative.
    """

    exact: Callable
    exact_grad: Callable
    exact_dt: Callable
    exact_laplacian: Callable
    forcing_mode: str = "operator_derived"
    paper_formula: Optional[Callable] = None
    gl_order: int = GL_ORDER

    def __post_init__(self):
        if self.forcing_mode not in ("operator_derived", "paper_formula"):
            raise ValueError(f"unknown forcing mode {self.forcing_mode!r}")
        if self.forcing_mode == "paper_formula" and self.paper_formula is None:
            raise ValueError("no closed-form forcing available for this problem")

    def operator_forcing(self, spec_parts: dict) -> Callable:
        """Forcing ``u_t + A u + memory`` for identity diffusion, alpha = 0."""
        beta_prime = spec_parts.get("d_beta")
        gamma = spec_parts.get("gamma")
        g = spec_parts.get("g")
        kernel = spec_parts["kernel"]

        def b_of_u(x, s):
            u = self.exact(x, s)
            grad = self.exact_grad(x, s)
            gx, gy = grad[:, 0], grad[:, 1]
            out = np.zeros(len(u))
            if beta_prime is not None:
                # -div beta(u) = -beta'(u) . grad u for x-independent beta
                bp = np.asarray(beta_prime(u))
                out -= bp[:, 0] * gx + bp[:, 1] * gy
            if gamma is not None:
                ga = np.asarray(gamma(u))
                out += ga[:, 0] * gx + ga[:, 1] * gy
            if g is not None:
                out += np.asarray(g(u))
            return out

        def forcing(x, t):
            x = np.atleast_2d(np.asarray(x, dtype=float))
            out = self.exact_dt(x, t) - self.exact_laplacian(x, t)
            nodes, wts = gauss_legendre_panels(t, self.gl_order)
            for s, w in zip(nodes, wts):
                out += w * kernel(np.array([t - s]))[0] * b_of_u(x, s)
            return out

        return forcing


def forcing_value(mp: ManufacturedProblem, spec: ProblemSpec, x, t: float) -> float:
    """Point evaluation of the manufactured forcing in the selected mode."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if mp.forcing_mode == "paper_formula":
        return float(mp.paper_formula(x, t)[0])
    return float(spec.forcing(x, t)[0])


def _memo_by_array(fn, maxsize=4):
    """Cache results keyed on the argument array object.

    The forcing is evaluated at the same (mesh-cached) quadrature array
    every step, so the spatial polynomial factors are computed once.
    """
    cache: dict = {}

    def wrapped(x):
        key = id(x)
        hit = cache.get(key)
        if hit is not None and hit[0] is x:
            return hit[1]
        val = fn(x)
        if len(cache) >= maxsize:
            cache.pop(next(iter(cache)))
        cache[key] = (x, val)
        return val

    return wrapped


@_memo_by_array
def _phi(x):
    return x[:, 0] * (1.0 - x[:, 0]) * x[:, 1] * (1.0 - x[:, 1])


@_memo_by_array
def _phi_x1(x):
    return (1.0 - 2.0 * x[:, 0]) * x[:, 1] * (1.0 - x[:, 1])


@_memo_by_array
def _phi_x2(x):
    return x[:, 0] * (1.0 - x[:, 0]) * (1.0 - 2.0 * x[:, 1])


def _pair(a, b):
    out = np.empty((len(a), 2))
    out[:, 0] = a
    out[:, 1] = b
    return out


def _section5_coefficients() -> dict:
    return dict(
        beta=lambda u: _pair(np.sin(u), 1.0 - np.cos(u)),
        gamma=lambda u: _pair(1.0 - np.cos(u), np.sin(u)),
        g=np.sin,
        d_beta=lambda u: _pair(np.cos(u), np.sin(u)),
        d_gamma=lambda u: _pair(np.sin(u), np.cos(u)),
        d_g=np.cos,
        kernel=lambda t: np.exp(-np.asarray(t, dtype=float)),
    )


def _section5_paper_forcing(gl_order: int = GL_ORDER) -> Callable:
    """The closed-form forcing as printed with the convergence study."""

    def forcing(x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phi = _phi(x)
        phix = _phi_x1(x)
        x1, x2 = x[:, 0], x[:, 1]
        et = np.exp(-t)
        poly = 2.0 * x1 * (1.0 - x1) - phi + 2.0 * x2 * (1.0 - x2) + phix * t
        out = poly * et
        nodes, wts = gauss_legendre_panels(t, gl_order)
        if len(nodes):
            es = np.exp(-nodes)
            # integral of cos(phi * e^{-s}) over [0, t]
            i1 = np.cos(phi[:, None] * es[None, :]) @ wts
            # integral of e^{s} sin(phi * e^{-s}) over [0, t]
            i2 = np.sin(phi[:, None] * es[None, :]) @ (wts / es)
            out += et * (-2.0 * phix * i1 + i2)
        return out

    return forcing


def section5_manufactured(forcing_mode: str = "operator_derived") -> ManufacturedProblem:
    def exact(x, t):
        return _phi(np.atleast_2d(x)) * np.exp(-t)

    def exact_grad(x, t):
        x = np.atleast_2d(x)
        return np.stack([_phi_x1(x), _phi_x2(x)], axis=-1) * np.exp(-t)

    def exact_dt(x, t):
        return -_phi(np.atleast_2d(x)) * np.exp(-t)

    def exact_laplacian(x, t):
        x = np.atleast_2d(x)
        lap = -2.0 * x[:, 1] * (1.0 - x[:, 1]) - 2.0 * x[:, 0] * (1.0 - x[:, 0])
        return lap * np.exp(-t)

    return ManufacturedProblem(
        exact=exact,
        exact_grad=exact_grad,
        exact_dt=exact_dt,
        exact_laplacian=exact_laplacian,
        forcing_mode=forcing_mode,
        paper_formula=_section5_paper_forcing(),
    )


def section5_problem(forcing_mode: str = "operator_derived") -> ProblemSpec:
    """The nonlinear-memory convergence-study problem on the unit square."""
    parts = _section5_coefficients()
    mp = section5_manufactured(forcing_mode)
    if forcing_mode == "paper_formula":
        forcing = mp.paper_formula
    else:
        forcing = mp.operator_forcing(parts)
    return ProblemSpec(
        diffusion=identity_diffusion,
        alpha=None,
        forcing=forcing,
        u0=lambda x: _phi(np.atleast_2d(x)),
        exact_solution=mp.exact,
        exact_gradient=mp.exact_grad,
        name="section5",
        **parts,
    )


def section5_constants() -> StabilityConstants:
    # Coercivity of the Dirichlet Laplacian on the unit square in the full
    # H1 norm, via Poincare with P^2 = 1 / (2 pi^2).
    nu0 = 2.0 * np.pi**2 / (1.0 + 2.0 * np.pi**2)
    # |beta(u)| = |gamma(u)| = 2|sin(u/2)| <= min(|u|, 2) and |sin u| <= |u|
    # bound the three memory terms by (1 + 2 + 1) ||u||_1 ||v||_1.
    mu0 = 4.0
    # max |exp(-t)| on t >= 0.
    K1 = 1.0
    return StabilityConstants(nu0=nu0, mu0=mu0, K1=K1)


def heat_problem() -> ProblemSpec:
    """Backward-Euler heat equation: memory coefficients all zero."""

    def exact(x, t):
        x = np.atleast_2d(x)
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]) * np.exp(-t)

    def exact_grad(x, t):
        x = np.atleast_2d(x)
        sx, cx = np.sin(np.pi * x[:, 0]), np.cos(np.pi * x[:, 0])
        sy, cy = np.sin(np.pi * x[:, 1]), np.cos(np.pi * x[:, 1])
        return np.pi * np.exp(-t) * np.stack([cx * sy, sx * cy], axis=-1)

    def forcing(x, t):
        return (2.0 * np.pi**2 - 1.0) * exact(x, t)

    return ProblemSpec(
        diffusion=identity_diffusion,
        kernel=lambda t: np.exp(-np.asarray(t, dtype=float)),
        forcing=forcing,
        u0=lambda x: exact(x, 0.0),
        exact_solution=exact,
        exact_gradient=exact_grad,
        name="heat_no_memory",
    )


def zero_problem() -> ProblemSpec:
    """Zero forcing and zero initial data with the nonlinear coefficients."""
    parts = _section5_coefficients()
    return ProblemSpec(
        diffusion=identity_diffusion,
        alpha=None,
        forcing=lambda x, t: np.zeros(len(np.atleast_2d(x))),
        u0=lambda x: np.zeros(len(np.atleast_2d(x))),
        exact_solution=lambda x, t: np.zeros(len(np.atleast_2d(x))),
        exact_gradient=lambda x, t: np.zeros((len(np.atleast_2d(x)), 2)),
        name="zero",
        **parts,
    )


PROBLEM_NAMES = ("paper_section5", "heat_no_memory", "zero")


def make_problem(name: str, forcing_mode: str = "operator_derived") -> ProblemSpec:
    """Problem factory used by the command line (also loads custom files).

    A name ending in ``.py`` is imported and must expose
    ``make_problem_spec() -> ProblemSpec``.
    """
    if name == "paper_section5":
        return section5_problem(forcing_mode)
    if name == "heat_no_memory":
        return heat_problem()
    if name == "zero":
        return zero_problem()
    if name.endswith(".py"):
        import importlib.util
        from pathlib import Path

        path = Path(name)
        if not path.exists():
            raise ValueError(f"custom problem file {name!r} does not exist")
        module_spec = importlib.util.spec_from_file_location("pidefem_custom", path)
        module = importlib.util.module_from_spec(module_spec)
        module_spec.loader.exec_module(module)
        if not hasattr(module, "make_problem_spec"):
            raise ValueError(
                f"custom problem file {name!r} defines no make_problem_spec()"
            )
        return module.make_problem_spec()
    raise ValueError(
        f"unknown problem {name!r}; choose one of {PROBLEM_NAMES} or a .py file"
    )
