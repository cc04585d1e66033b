"""Quadrature rules: a degree-4 triangle rule and Gauss-Legendre panels.

The triangle rule is the classic symmetric 6-point rule (two orbits of
three points).  Weights are normalised so that they sum to one; the
integral over a physical triangle T is then ``area(T) * sum_q w_q f(x_q)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_A1 = 0.445948490915965
_A2 = 0.091576213509771
_W1 = 0.223381589678011
_W2 = 0.109951743655322


@dataclass(frozen=True)
class TriangleRule:
    """Symmetric quadrature rule on the reference triangle.

    Attributes
    ----------
    points : ndarray, shape (nq, 3)
        Barycentric coordinates of the quadrature points.
    weights : ndarray, shape (nq,)
        Reference weights, summing to one.
    degree : int
        Highest polynomial degree integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return len(self.weights)


DEGREE4 = TriangleRule(
    points=np.array(
        [
            [1.0 - 2.0 * _A1, _A1, _A1],
            [_A1, 1.0 - 2.0 * _A1, _A1],
            [_A1, _A1, 1.0 - 2.0 * _A1],
            [1.0 - 2.0 * _A2, _A2, _A2],
            [_A2, 1.0 - 2.0 * _A2, _A2],
            [_A2, _A2, 1.0 - 2.0 * _A2],
        ]
    ),
    weights=np.array([_W1, _W1, _W1, _W2, _W2, _W2]),
    degree=4,
)

# P1 basis functions on the reference triangle coincide with the
# barycentric coordinates, so this table doubles as basis-at-quadrature.
P1_AT_QP = DEGREE4.points

# Monomial exponents of the quadratic barycentric basis used to
# reconstruct a smooth integrand from its 6 sampled values per triangle.
_P2_MONOMIALS = (
    (2, 0, 0),
    (0, 2, 0),
    (0, 0, 2),
    (1, 1, 0),
    (1, 0, 1),
    (0, 1, 1),
)


def p2_monomials(bary: np.ndarray) -> np.ndarray:
    """Evaluate the six quadratic barycentric monomials at points ``bary``.

    Parameters
    ----------
    bary : ndarray, shape (n, 3)

    Returns
    -------
    ndarray, shape (n, 6)
    """
    bary = np.asarray(bary, dtype=float)
    cols = [
        bary[:, 0] ** i * bary[:, 1] ** j * bary[:, 2] ** k
        for (i, j, k) in _P2_MONOMIALS
    ]
    return np.stack(cols, axis=1)


# Vandermonde of the quadratic monomials at the 6-point rule nodes.  The
# rule's nodes are unisolvent for P2, so sampled values of a smooth
# function determine a unique quadratic per triangle.
P2_VANDERMONDE = p2_monomials(DEGREE4.points)
P2_VANDERMONDE_INV = np.linalg.inv(P2_VANDERMONDE)


def gauss_legendre_panels(t: float, order: int = 12, panel_width: float = 1.0):
    """Gauss-Legendre nodes and weights for integrating over ``[0, t]``.

    The interval is split into ``ceil(t / panel_width)`` equal panels so
    the fixed-order rule keeps its accuracy on long intervals.

    Returns
    -------
    (nodes, weights) : pair of ndarrays, empty when ``t == 0``.
    """
    if t < 0:
        raise ValueError("integration endpoint must be nonnegative")
    if t == 0.0:
        return np.empty(0), np.empty(0)
    n_panels = max(1, int(np.ceil(t / panel_width - 1e-12)))
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, t, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights
