"""Structured triangulations of axis-aligned rectangles and P1 functions.

Every grid cell is split into two triangles along the same diagonal, so
point location is O(1) index arithmetic.  Coarse/fine mesh pairs are not
assumed to be nested anywhere: evaluation of a function from one mesh at
points of another goes through :func:`locate_points`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import quadrature

__all__ = [
    "Rectangle",
    "Mesh",
    "FeFunction",
    "build_mesh",
    "locate_point",
    "locate_points",
    "eval_on_mesh",
    "eval_gradient_on_mesh",
    "CrossMeshMap",
    "QuadSampleTransfer",
]

# Tolerance (in units of one grid cell) for snapping points onto grid
# lines; keeps the lowest-triangle-index tie-break deterministic.
_SNAP = 1e-9


class Rectangle(NamedTuple):
    ax: float = 0.0
    bx: float = 1.0
    ay: float = 0.0
    by: float = 1.0


UNIT_SQUARE = Rectangle()


class Mesh:
    """Uniform triangulation of a rectangle.

    Parameters
    ----------
    nx, ny : int
        Number of subdivisions per axis (cells, not nodes).
    domain : Rectangle
        Corner coordinates ``(ax, bx) x (ay, by)``.

    Notes
    -----
    Node ``(i, j)`` has index ``j * (nx + 1) + i``.  Cell ``(i, j)`` is
    split along the diagonal from ``(i+1, j)`` to ``(i, j+1)`` into a
    lower triangle ``2 * (j * nx + i)`` and an upper one right after it;
    all triangles are counterclockwise.  The mesh is immutable after
    construction and safe to share across threads.
    """

    def __init__(self, nx: int, ny: int, domain: Rectangle = UNIT_SQUARE):
        if nx < 1 or ny < 1:
            raise ValueError(f"subdivision counts must be >= 1, got {nx}x{ny}")
        ax, bx, ay, by = domain
        if not (bx > ax and by > ay):
            raise ValueError(f"degenerate rectangle {domain}")
        self.nx = int(nx)
        self.ny = int(ny)
        self.domain = Rectangle(*map(float, domain))
        self.hx = (bx - ax) / nx
        self.hy = (by - ay) / ny

        xs = np.linspace(ax, bx, nx + 1)
        ys = np.linspace(ay, by, ny + 1)
        X, Y = np.meshgrid(xs, ys)
        self.nodes = np.column_stack([X.ravel(), Y.ravel()])

        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
        ii = ii.ravel()
        jj = jj.ravel()
        n00 = jj * (nx + 1) + ii
        n10 = n00 + 1
        n01 = n00 + (nx + 1)
        n11 = n01 + 1
        lower = np.column_stack([n00, n10, n01])
        upper = np.column_stack([n10, n11, n01])
        tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
        tris[0::2] = lower
        tris[1::2] = upper
        self.triangles = tris

        bmask = np.zeros(self.n_nodes, dtype=bool)
        gi = np.arange(self.n_nodes) % (nx + 1)
        gj = np.arange(self.n_nodes) // (nx + 1)
        bmask[(gi == 0) | (gi == nx) | (gj == 0) | (gj == ny)] = True
        self.boundary_mask = bmask

        self._init_geometry()
        for arr in (self.nodes, self.triangles, self.boundary_mask,
                    self.tri_areas, self.tri_grads):
            arr.setflags(write=False)
        self._qp_cache = None
        self._pattern_cache = None

    def _init_geometry(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.tri_areas = 0.5 * det
        # Gradients of the three barycentric (P1 basis) functions.
        g = np.empty((self.n_triangles, 3, 2))
        for k in range(3):
            a = p[:, (k + 1) % 3]
            b = p[:, (k + 2) % 3]
            g[:, k, 0] = (a[:, 1] - b[:, 1]) / det
            g[:, k, 1] = (b[:, 0] - a[:, 0]) / det
        self.tri_grads = g

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_triangles(self) -> int:
        return 2 * self.nx * self.ny

    @property
    def area(self) -> float:
        ax, bx, ay, by = self.domain
        return (bx - ax) * (by - ay)

    def quad_points(self):
        """Physical quadrature points and scaled weights of the degree-4 rule.

        Returns
        -------
        (points, weights) : ndarray (nq, 2), ndarray (nq,)
            ``nq = 6 * n_triangles``; quadrature point ``6 * t + k`` lies
            in triangle ``t``.  Weights include the triangle areas.
        """
        if self._qp_cache is None:
            bary = quadrature.DEGREE4.points
            pts = np.einsum("qk,tkd->tqd", bary, self.nodes[self.triangles])
            w = np.outer(self.tri_areas, quadrature.DEGREE4.weights)
            self._qp_cache = (pts.reshape(-1, 2), w.ravel())
        return self._qp_cache

    def interpolate(self, fn: Callable[[np.ndarray], np.ndarray]) -> "FeFunction":
        """Nodal interpolant of a function of the coordinates."""
        return FeFunction(self, np.asarray(fn(self.nodes), dtype=float))

    def pattern(self):
        from .assembly import SparsityPattern  # local import to avoid a cycle

        if self._pattern_cache is None:
            self._pattern_cache = SparsityPattern(self)
        return self._pattern_cache

    def __repr__(self):
        return f"Mesh({self.nx}x{self.ny}, domain={tuple(self.domain)})"


@dataclass
class FeFunction:
    """P1 finite element function: nodal coefficients bound to a mesh."""

    mesh: Mesh
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.mesh.n_nodes,):
            raise ValueError(
                f"coefficient vector has length {self.coeffs.shape}, "
                f"mesh has {self.mesh.n_nodes} nodes"
            )

    def copy(self) -> "FeFunction":
        return FeFunction(self.mesh, self.coeffs.copy())


def build_mesh(nx: int, ny: int, domain: Rectangle = UNIT_SQUARE) -> Mesh:
    """Build a uniform triangulation with ``nx * ny`` cells.

    Raises
    ------
    ValueError
        If a subdivision count is zero or the rectangle is degenerate.
    """
    return Mesh(nx, ny, domain)


def _axis_cells(coord, a, h, n, name):
    f = (np.asarray(coord, dtype=float) - a) / h
    if np.any(f < -_SNAP) or np.any(f > n + _SNAP):
        bad = int(np.argmax((f < -_SNAP) | (f > n + _SNAP)))
        raise ValueError(
            f"point {bad} lies outside the mesh domain along {name}"
        )
    near = np.rint(f)
    on_line = np.abs(f - near) <= _SNAP
    cell = np.where(on_line, near - 1, np.floor(f))
    cell = np.clip(cell, 0, n - 1).astype(np.int64)
    return cell, f - cell


def locate_points(mesh: Mesh, points: np.ndarray):
    """Locate many points in a structured mesh.

    Points on shared edges or vertices are assigned to the containing
    triangle of lowest index, so cross-mesh evaluation is reproducible.

    Parameters
    ----------
    points : ndarray, shape (n, 2)

    Returns
    -------
    (tri, bary) : ndarray (n,) of int, ndarray (n, 3)
        Triangle indices and barycentric coordinates; the coordinates are
        clipped to [0, 1] and renormalised to sum to one.

    Raises
    ------
    ValueError
        If any point lies outside the closed domain rectangle.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ax, _, ay, _ = mesh.domain
    i, xi = _axis_cells(points[:, 0], ax, mesh.hx, mesh.nx, "x")
    j, eta = _axis_cells(points[:, 1], ay, mesh.hy, mesh.ny, "y")

    in_lower = xi + eta <= 1.0 + _SNAP
    tri = 2 * (j * mesh.nx + i) + np.where(in_lower, 0, 1)

    bary = np.empty((len(points), 3))
    bary[:, 0] = np.where(in_lower, 1.0 - xi - eta, 1.0 - eta)
    bary[:, 1] = np.where(in_lower, xi, xi + eta - 1.0)
    bary[:, 2] = np.where(in_lower, eta, 1.0 - xi)
    np.clip(bary, 0.0, 1.0, out=bary)
    bary /= bary.sum(axis=1, keepdims=True)
    return tri, bary


def locate_point(mesh: Mesh, p) -> tuple[int, np.ndarray]:
    """Locate a single point; see :func:`locate_points`."""
    tri, bary = locate_points(mesh, np.asarray(p, dtype=float)[None, :])
    return int(tri[0]), bary[0]


class CrossMeshMap:
    """Frozen evaluation map from a source mesh onto fixed target points.

    Builds the point-location data once; afterwards values and gradients
    of any coefficient vector on the source mesh are plain gathers.
    """

    def __init__(self, source: Mesh, points: np.ndarray):
        self.source = source
        tri, bary = locate_points(source, points)
        self.tri = tri
        self.bary = bary
        self._conn = source.triangles[tri]
        self._grads = source.tri_grads[tri]

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        return np.einsum("nk,nk->n", self.bary, coeffs[self._conn])

    def gradients(self, coeffs: np.ndarray) -> np.ndarray:
        return np.einsum("nk,nkd->nd", coeffs[self._conn], self._grads)


def eval_on_mesh(source: FeFunction, target_points) -> np.ndarray:
    """Evaluate a P1 function at arbitrary points of its domain.

    Exact (up to roundoff) for functions linear on the source triangle
    containing each point.
    """
    pts = np.atleast_2d(np.asarray(target_points, dtype=float))
    return CrossMeshMap(source.mesh, pts).values(source.coeffs)


def eval_gradient_on_mesh(source: FeFunction, target_points) -> np.ndarray:
    """Piecewise-constant gradient of a P1 function at arbitrary points."""
    pts = np.atleast_2d(np.asarray(target_points, dtype=float))
    return CrossMeshMap(source.mesh, pts).gradients(source.coeffs)


class QuadSampleTransfer:
    """Carry quadrature-point samples from a coarse mesh to target points.

    A smooth field sampled at the six degree-4 quadrature points of each
    coarse triangle determines a unique quadratic there; this object
    evaluates that per-triangle quadratic at fixed target points.  Used to
    reuse memory-term integrands computed on the coarse grid when
    assembling against fine-grid test functions.
    """

    def __init__(self, source: Mesh, points: np.ndarray):
        from scipy import sparse

        points = np.atleast_2d(np.asarray(points, dtype=float))
        tri, bary = locate_points(source, points)
        # Row of weights onto the 6 samples of the containing triangle.
        w = quadrature.p2_monomials(bary) @ quadrature.P2_VANDERMONDE_INV
        n = len(points)
        rows = np.repeat(np.arange(n), 6)
        cols = (tri[:, None] * 6 + np.arange(6)[None, :]).ravel()
        self.matrix = sparse.csr_matrix(
            (w.ravel(), (rows, cols)), shape=(n, 6 * source.n_triangles)
        )

    def apply(self, samples: np.ndarray) -> np.ndarray:
        """Map per-coarse-qp samples (nq,) or (nq, m) to the target points."""
        return self.matrix @ samples
