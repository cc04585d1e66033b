"""P1 assembly of the mass, stiffness and memory forms.

The memory operator is ``B u = -div(alpha(u) grad u + beta(u))
+ gamma(u) . grad u + g(u)``; its weak form and the splittings used by
the two-grid drivers are assembled here over the degree-4 quadrature
rule.  All matrices share one sparsity pattern per mesh (node adjacency),
so repeated assembly reduces to filling a data array.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import sparse

from . import backends, quadrature
from .mesh import CrossMeshMap, FeFunction, Mesh

__all__ = [
    "ProblemSpec",
    "FormVariant",
    "QpFields",
    "SparsityPattern",
    "fe_qp_fields",
    "cross_qp_fields",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_load_vector",
    "assemble_B_vector",
    "assemble_Btilde_matrix",
    "assemble_B_jacobian",
    "apply_dirichlet",
]


def identity_diffusion(x: np.ndarray, t: float) -> np.ndarray:
    """Unit diffusion tensor, realising ``A = -laplace``."""
    n = len(np.atleast_2d(x))
    out = np.zeros((n, 2, 2))
    out[:, 0, 0] = 1.0
    out[:, 1, 1] = 1.0
    return out


@dataclass
class ProblemSpec:
    """Data of one parabolic problem with nonlinear memory.

    Coefficient callables are vectorised over arrays of state values
    ``u`` with shapes: ``alpha(u) -> (n, 2, 2)``, ``beta(u) -> (n, 2)``,
    ``gamma(u) -> (n, 2)``, ``g(u) -> (n,)``; the ``d_*`` entries are
    their derivatives with respect to ``u`` (same shapes).  ``None``
    means identically zero.  ``beta(0) = 0`` and ``g(0) = 0`` are
    required and checked at construction.
    """

    diffusion: Callable = identity_diffusion
    alpha: Optional[Callable] = None
    beta: Optional[Callable] = None
    gamma: Optional[Callable] = None
    g: Optional[Callable] = None
    d_alpha: Optional[Callable] = None
    d_beta: Optional[Callable] = None
    d_gamma: Optional[Callable] = None
    d_g: Optional[Callable] = None
    kernel: Callable = None
    forcing: Callable = None
    u0: Callable = None
    exact_solution: Optional[Callable] = None
    exact_gradient: Optional[Callable] = None
    diffusion_time_dependent: bool = False
    name: str = "problem"

    def __post_init__(self):
        zero = np.zeros(1)
        if self.beta is not None:
            b0 = np.asarray(self.beta(zero), dtype=float)
            if not np.all(np.abs(b0) <= 1e-12):
                raise ValueError(f"beta(0) must vanish, got {b0.ravel()}")
        if self.g is not None:
            g0 = np.asarray(self.g(zero), dtype=float)
            if not np.all(np.abs(g0) <= 1e-12):
                raise ValueError(f"g(0) must vanish, got {g0.ravel()}")

    @property
    def memory_is_lower_order(self) -> bool:
        """True when ``alpha`` vanishes identically (enables coarse-only storage)."""
        return self.alpha is None

    def require_derivatives(self):
        missing = [
            name
            for name, f, d in (
                ("d_alpha", self.alpha, self.d_alpha),
                ("d_beta", self.beta, self.d_beta),
                ("d_gamma", self.gamma, self.d_gamma),
                ("d_g", self.g, self.d_g),
            )
            if f is not None and d is None
        ]
        if missing:
            raise ValueError(
                f"Newton needs coefficient derivatives; missing {missing}"
            )


class FormVariant(enum.Enum):
    """Which splitting of the memory form to assemble."""

    FULL_B = "full_B"
    LINEARIZED_BTILDE = "linearized_Btilde"
    SYMMETRIC_BS = "symmetric_Bs"
    LOWER_ORDER_N = "lower_order_N"


class QpFields(NamedTuple):
    """Values and gradient components of a P1 function at quadrature points."""

    vals: np.ndarray
    gx: np.ndarray
    gy: np.ndarray

    @property
    def grad(self) -> np.ndarray:
        return np.stack([self.gx, self.gy], axis=-1)


_EMPTY_S = np.empty(0)
_EMPTY_V = np.empty((0, 2))
_EMPTY_T = np.empty((0, 2, 2))


class SparsityPattern:
    """Node-adjacency CSR pattern shared by every matrix on a mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        n = mesh.n_nodes
        tris = mesh.triangles
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        keys = np.unique(rows * n + cols)
        self.indices = (keys % n).astype(np.int32)
        counts = np.bincount((keys // n).astype(np.int64), minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.nnz = len(keys)
        self.idx_map = np.searchsorted(keys, rows * n + cols).reshape(-1, 3, 3)
        self.row_ids = np.repeat(np.arange(n), np.diff(self.indptr))

    def matrix(self, data: np.ndarray) -> sparse.csr_matrix:
        return sparse.csr_matrix(
            (data, self.indices, self.indptr),
            shape=(self.mesh.n_nodes, self.mesh.n_nodes),
            copy=False,
        )


def fe_qp_fields(f: FeFunction) -> QpFields:
    """Interpolate a P1 function to its own mesh's quadrature points."""
    mesh = f.mesh
    vals, gx, gy = backends.get().interp_qp(
        mesh.triangles, mesh.tri_grads, quadrature.P1_AT_QP, f.coeffs
    )
    return QpFields(vals, gx, gy)


def cross_qp_fields(cmap: CrossMeshMap, coeffs: np.ndarray) -> QpFields:
    """Evaluate a source-mesh coefficient vector on prelocated points."""
    grad = cmap.gradients(coeffs)
    return QpFields(cmap.values(coeffs), grad[:, 0], grad[:, 1])


def _as_w_values(mesh: Mesh, w) -> np.ndarray:
    if isinstance(w, FeFunction):
        if w.mesh is not mesh:
            raise ValueError("coefficient state lives on a different mesh; "
                             "evaluate it at this mesh's quadrature points first")
        return fe_qp_fields(w).vals
    if isinstance(w, QpFields):
        return w.vals
    w = np.asarray(w, dtype=float)
    nq = 6 * mesh.n_triangles
    if w.shape != (nq,):
        raise ValueError(f"expected {nq} quadrature values, got shape {w.shape}")
    return w


def _as_u_fields(mesh: Mesh, u) -> QpFields:
    if u is None:
        nq = 6 * mesh.n_triangles
        z = np.zeros(nq)
        return QpFields(z, z, z)
    if isinstance(u, FeFunction):
        if u.mesh is not mesh:
            raise ValueError("trial function lives on a different mesh")
        return fe_qp_fields(u)
    if isinstance(u, QpFields):
        nq = 6 * mesh.n_triangles
        if u.vals.shape != (nq,):
            raise ValueError("quadrature field size mismatch")
        return u
    raise TypeError(f"cannot interpret trial data of type {type(u)!r}")


def _tensor_dot_grad(a: np.ndarray, fields: QpFields) -> np.ndarray:
    out = np.empty((len(fields.vals), 2))
    out[:, 0] = a[:, 0, 0] * fields.gx + a[:, 0, 1] * fields.gy
    out[:, 1] = a[:, 1, 0] * fields.gx + a[:, 1, 1] * fields.gy
    return out


def memory_integrand(
    spec: ProblemSpec, variant: FormVariant, w_vals: np.ndarray, u: QpFields
):
    """Flux ``p`` (against grad v) and source ``s`` (against v) of a variant.

    full_B and linearized_Btilde share one expression (they differ only in
    where the state ``w`` comes from):
    ``p = alpha(w) grad u + beta(w)``, ``s = gamma(w) . grad u + g(w)``.
    symmetric_Bs keeps only ``alpha(w) grad u``; lower_order_N keeps
    ``beta(w)`` and the full ``s``.  The exact algebraic identity
    ``Btilde = Bs + N`` holds term by term.
    """
    n = len(w_vals)
    p = np.zeros((n, 2))
    s = np.zeros(n)
    with_alpha = variant in (
        FormVariant.FULL_B,
        FormVariant.LINEARIZED_BTILDE,
        FormVariant.SYMMETRIC_BS,
    )
    with_beta = variant in (
        FormVariant.FULL_B,
        FormVariant.LINEARIZED_BTILDE,
        FormVariant.LOWER_ORDER_N,
    )
    with_lower = variant is not FormVariant.SYMMETRIC_BS
    if with_alpha and spec.alpha is not None:
        p += _tensor_dot_grad(np.asarray(spec.alpha(w_vals), dtype=float), u)
    if with_beta and spec.beta is not None:
        p += np.asarray(spec.beta(w_vals), dtype=float)
    if with_lower:
        if spec.gamma is not None:
            gam = np.asarray(spec.gamma(w_vals), dtype=float)
            s += gam[:, 0] * u.gx + gam[:, 1] * u.gy
        if spec.g is not None:
            s += np.asarray(spec.g(w_vals), dtype=float)
    return p, s


def assemble_mass(mesh: Mesh) -> sparse.csr_matrix:
    """Mass matrix ``(phi_k, phi_j)``; SPD, total entry sum = domain area."""
    _, qw = mesh.quad_points()
    nq = 6 * mesh.n_triangles
    pat = mesh.pattern()
    data = backends.get().assemble_matrix_data(
        mesh.triangles, mesh.tri_grads, qw, quadrature.P1_AT_QP, pat.idx_map,
        _EMPTY_T, _EMPTY_V, _EMPTY_V, np.ones(nq), pat.nnz,
    )
    return pat.matrix(data)


def assemble_stiffness(
    mesh: Mesh, diffusion: Callable = identity_diffusion, t: float = 0.0
) -> sparse.csr_matrix:
    """Stiffness matrix ``(D grad(phi_k), grad(phi_j))`` of the elliptic part.

    Raises
    ------
    ValueError
        If the diffusion tensor is not symmetric at the quadrature points.
    """
    pts, qw = mesh.quad_points()
    a = np.asarray(diffusion(pts, t), dtype=float)
    skew = np.max(np.abs(a[:, 0, 1] - a[:, 1, 0]))
    if skew > 1e-12 * (1.0 + np.max(np.abs(a))):
        raise ValueError(f"diffusion tensor is non-symmetric (max skew {skew:.3e})")
    pat = mesh.pattern()
    data = backends.get().assemble_matrix_data(
        mesh.triangles, mesh.tri_grads, qw, quadrature.P1_AT_QP, pat.idx_map,
        a, _EMPTY_V, _EMPTY_V, _EMPTY_S, pat.nnz,
    )
    return pat.matrix(data)


def assemble_load_vector(mesh: Mesh, forcing: Callable, t: float) -> np.ndarray:
    """Load vector ``(f(., t), phi_j)`` by quadrature."""
    pts, qw = mesh.quad_points()
    s = np.asarray(forcing(pts, t), dtype=float)
    return backends.get().assemble_vector(
        mesh.triangles, mesh.tri_grads, qw, quadrature.P1_AT_QP,
        _EMPTY_V, s, mesh.n_nodes,
    )


def assemble_qp_vector(mesh: Mesh, p: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Nodal vector of ``integral(p . grad(phi_j) + s phi_j)`` from raw samples."""
    _, qw = mesh.quad_points()
    return backends.get().assemble_vector(
        mesh.triangles, mesh.tri_grads, qw, quadrature.P1_AT_QP,
        np.ascontiguousarray(p) if p is not None else _EMPTY_V,
        np.ascontiguousarray(s) if s is not None else _EMPTY_S,
        mesh.n_nodes,
    )


def assemble_B_vector(
    mesh: Mesh, spec: ProblemSpec, variant: FormVariant, w, u=None
) -> np.ndarray:
    """Vector of the chosen memory-form variant against every basis function.

    Parameters
    ----------
    w : quadrature values, QpFields or FeFunction
        State the nonlinear coefficients are evaluated at.
    u : QpFields, FeFunction or None
        Trial state supplying ``grad u``; ``None`` treats it as zero,
        which yields the state-independent part ``(beta(w), g(w))`` for
        the lower_order_N variant.
    """
    w_vals = _as_w_values(mesh, w)
    u_fields = _as_u_fields(mesh, u)
    p, s = memory_integrand(spec, variant, w_vals, u_fields)
    return assemble_qp_vector(mesh, p, s)


def assemble_Btilde_matrix(
    mesh: Mesh, spec: ProblemSpec, variant: FormVariant, w
) -> sparse.csr_matrix:
    """State-frozen matrix of the trial-dependent part of a memory variant.

    For linearized_Btilde the product with a coefficient vector ``u``
    gives the ``alpha(w) grad u`` and ``gamma(w) . grad u`` terms of
    ``Btilde(w; u, .)``; the remaining ``(beta(w), g(w))`` part comes from
    :func:`assemble_B_vector` with lower_order_N and ``u=None``.  The
    symmetric_Bs variant keeps only the (symmetric) ``alpha`` block.
    """
    if variant not in (FormVariant.LINEARIZED_BTILDE, FormVariant.SYMMETRIC_BS):
        raise ValueError(f"no matrix form for variant {variant}")
    w_vals = _as_w_values(mesh, w)
    _, qw = mesh.quad_points()
    a = (
        np.asarray(spec.alpha(w_vals), dtype=float)
        if spec.alpha is not None
        else _EMPTY_T
    )
    c = _EMPTY_V
    if variant is FormVariant.LINEARIZED_BTILDE and spec.gamma is not None:
        c = np.asarray(spec.gamma(w_vals), dtype=float)
    pat = mesh.pattern()
    data = backends.get().assemble_matrix_data(
        mesh.triangles, mesh.tri_grads, qw, quadrature.P1_AT_QP, pat.idx_map,
        a, _EMPTY_V, c, _EMPTY_S, pat.nnz,
    )
    return pat.matrix(data)


def assemble_B_jacobian(mesh: Mesh, spec: ProblemSpec, u) -> sparse.csr_matrix:
    """Gateaux derivative of ``u -> B(u, .)`` at the state ``u``.

    Entry (j, k) is
    ``(alpha'(u) phi_k grad u + alpha(u) grad phi_k + beta'(u) phi_k, grad phi_j)
    + (gamma'(u) phi_k . grad u + gamma(u) . grad phi_k + g'(u) phi_k, phi_j)``.
    """
    spec.require_derivatives()
    fields = _as_u_fields(mesh, u)
    w = fields.vals
    _, qw = mesh.quad_points()
    n = len(w)

    a = _EMPTY_T
    b = np.zeros((n, 2))
    has_b = False
    c = _EMPTY_V
    r = np.zeros(n)
    has_r = False
    if spec.alpha is not None:
        a = np.asarray(spec.alpha(w), dtype=float)
        b += _tensor_dot_grad(np.asarray(spec.d_alpha(w), dtype=float), fields)
        has_b = True
    if spec.beta is not None:
        b += np.asarray(spec.d_beta(w), dtype=float)
        has_b = True
    if spec.gamma is not None:
        c = np.asarray(spec.gamma(w), dtype=float)
        dgam = np.asarray(spec.d_gamma(w), dtype=float)
        r += dgam[:, 0] * fields.gx + dgam[:, 1] * fields.gy
        has_r = True
    if spec.g is not None:
        r += np.asarray(spec.d_g(w), dtype=float)
        has_r = True

    pat = mesh.pattern()
    data = backends.get().assemble_matrix_data(
        mesh.triangles, mesh.tri_grads, qw, quadrature.P1_AT_QP, pat.idx_map,
        a, b if has_b else _EMPTY_V, c, r if has_r else _EMPTY_S, pat.nnz,
    )
    return pat.matrix(data)


def apply_dirichlet(
    matrix: sparse.spmatrix,
    rhs: np.ndarray,
    mask: np.ndarray,
    values: Optional[np.ndarray] = None,
):
    """Eliminate Dirichlet rows/columns symmetrically.

    Boundary rows and columns are zeroed, the boundary diagonal set to
    one and the right-hand side carries the boundary values (zero by
    default); column contributions are moved to the interior right-hand
    side first, so the interior block is untouched.

    Returns
    -------
    (matrix, rhs) : eliminated copies.
    """
    A = sparse.csr_matrix(matrix, copy=True)
    mask = np.asarray(mask, dtype=bool)
    n = A.shape[0]
    if mask.shape != (n,):
        raise ValueError(f"mask length {mask.shape} does not match matrix size {n}")
    rhs = np.array(rhs, dtype=float, copy=True)

    bvals = None
    if values is not None:
        bvals = np.zeros(n)
        bvals[mask] = np.asarray(values, dtype=float)[mask]
        if np.any(bvals):
            rhs -= A @ bvals

    row_ids = np.repeat(np.arange(n), np.diff(A.indptr))
    A.data[mask[row_ids] | mask[A.indices]] = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sparse.SparseEfficiencyWarning)
        diag = A.diagonal()
        A.setdiag(np.where(mask, 1.0, diag))
    rhs[mask] = bvals[mask] if bvals is not None else 0.0
    return A.tocsr(), rhs
