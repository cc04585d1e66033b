"""Pure-numpy kernels: vectorised assembly and Krylov loops over scipy CSR.

Status codes of the Krylov kernels: 0 converged, 1 iteration cap,
2 breakdown, 3 indefiniteness (CG only).
"""

import numpy as np
from scipy import sparse

NAME = "numpy"


def interp_qp(conn, grads, basis, coeffs):
    """Values and gradient components of a P1 function at all quadrature points."""
    cn = coeffs[conn]
    vals = np.einsum("tj,qj->tq", cn, basis).ravel()
    nq = basis.shape[0]
    gx = np.repeat(np.einsum("tj,tj->t", cn, grads[:, :, 0]), nq)
    gy = np.repeat(np.einsum("tj,tj->t", cn, grads[:, :, 1]), nq)
    return vals, gx, gy


def assemble_vector(conn, grads, qw, basis, p, s, n_nodes):
    """Nodal vector of ``integral(p . grad(phi_j) + s * phi_j)``."""
    nt = conn.shape[0]
    nq = basis.shape[0]
    W = qw.reshape(nt, nq)
    local = np.zeros((nt, 3))
    if p.size:
        local += np.einsum("tq,tqd,tjd->tj", W, p.reshape(nt, nq, 2), grads)
    if s.size:
        local += np.einsum("tq,tq,qj->tj", W, s.reshape(nt, nq), basis)
    return np.bincount(conn.ravel(), weights=local.ravel(), minlength=n_nodes)


def assemble_matrix_data(conn, grads, qw, basis, idx_map, a, b, c, r, nnz):
    """CSR data array of the general form matrix.

    Entry (j, k) accumulates, per quadrature point,
    ``(a grad(phi_k)) . grad(phi_j) + (b phi_k) . grad(phi_j)
      + (c . grad(phi_k)) phi_j + r phi_k phi_j``.
    """
    nt = conn.shape[0]
    nq = basis.shape[0]
    W = qw.reshape(nt, nq)
    local = np.zeros((nt, 3, 3))
    if a.size:
        local += np.einsum(
            "tq,tqab,tkb,tja->tjk", W, a.reshape(nt, nq, 2, 2), grads, grads
        )
    if b.size:
        local += np.einsum(
            "tq,tqa,tja,qk->tjk", W, b.reshape(nt, nq, 2), grads, basis
        )
    if c.size:
        local += np.einsum(
            "tq,tqa,tka,qj->tjk", W, c.reshape(nt, nq, 2), grads, basis
        )
    if r.size:
        local += np.einsum("tq,tq,qj,qk->tjk", W, r.reshape(nt, nq), basis, basis)
    return np.bincount(idx_map.ravel(), weights=local.ravel(), minlength=nnz)


def _csr(indptr, indices, data, n):
    return sparse.csr_matrix((data, indices, indptr), shape=(n, n), copy=False)


def cg_kernel(indptr, indices, data, b, tol_abs, maxiter):
    """Conjugate gradients on CSR arrays; see module docstring for statuses."""
    A = _csr(indptr, indices, data, len(b))
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    tol2 = tol_abs * tol_abs
    iters = 0
    while rr > tol2:
        if iters >= maxiter:
            return x, iters, 1
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0.0:
            return x, iters, 3
        alpha = rr / curv
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        iters += 1
    return x, iters, 0


def bicgstab_kernel(indptr, indices, data, b, tol_abs, maxiter):
    """BiCGStab on CSR arrays; see module docstring for statuses."""
    A = _csr(indptr, indices, data, len(b))
    x = np.zeros_like(b)
    r = b.copy()
    r0 = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for iters in range(1, maxiter + 1):
        rho_new = r0 @ r
        if rho_new == 0.0 or omega == 0.0:
            return x, iters, 2
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        v = A @ p
        denom = r0 @ v
        if denom == 0.0:
            return x, iters, 2
        alpha = rho / denom
        s = r - alpha * v
        if np.sqrt(s @ s) <= tol_abs:
            x += alpha * p
            return x, iters, 0
        t = A @ s
        tt = t @ t
        if tt == 0.0:
            return x, iters, 2
        omega = (t @ s) / tt
        x += alpha * p + omega * s
        r = s - omega * t
        if np.sqrt(r @ r) <= tol_abs:
            return x, iters, 0
    return x, maxiter, 1
