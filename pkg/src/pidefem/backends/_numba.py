"""Numba-jitted assembly kernels: fused per-triangle quadrature loops."""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _interp_qp(conn, grads, basis, coeffs, vals, gx, gy):
    nt = conn.shape[0]
    nq = basis.shape[0]
    for t in range(nt):
        c0 = coeffs[conn[t, 0]]
        c1 = coeffs[conn[t, 1]]
        c2 = coeffs[conn[t, 2]]
        gxv = c0 * grads[t, 0, 0] + c1 * grads[t, 1, 0] + c2 * grads[t, 2, 0]
        gyv = c0 * grads[t, 0, 1] + c1 * grads[t, 1, 1] + c2 * grads[t, 2, 1]
        for q in range(nq):
            idx = t * nq + q
            vals[idx] = c0 * basis[q, 0] + c1 * basis[q, 1] + c2 * basis[q, 2]
            gx[idx] = gxv
            gy[idx] = gyv


def interp_qp(conn, grads, basis, coeffs):
    nq_total = conn.shape[0] * basis.shape[0]
    vals = np.empty(nq_total)
    gx = np.empty(nq_total)
    gy = np.empty(nq_total)
    _interp_qp(conn, grads, basis, coeffs, vals, gx, gy)
    return vals, gx, gy


@njit(cache=True)
def _assemble_vector(conn, grads, qw, basis, p, s, out):
    nt = conn.shape[0]
    nq = basis.shape[0]
    has_p = p.shape[0] > 0
    has_s = s.shape[0] > 0
    for t in range(nt):
        for q in range(nq):
            idx = t * nq + q
            w = qw[idx]
            for j in range(3):
                acc = 0.0
                if has_p:
                    acc += p[idx, 0] * grads[t, j, 0] + p[idx, 1] * grads[t, j, 1]
                if has_s:
                    acc += s[idx] * basis[q, j]
                out[conn[t, j]] += w * acc


def assemble_vector(conn, grads, qw, basis, p, s, n_nodes):
    out = np.zeros(n_nodes)
    _assemble_vector(conn, grads, qw, basis, p, s, out)
    return out


@njit(cache=True)
def _assemble_matrix_data(conn, grads, qw, basis, idx_map, a, b, c, r, data):
    nt = conn.shape[0]
    nq = basis.shape[0]
    has_a = a.shape[0] > 0
    has_b = b.shape[0] > 0
    has_c = c.shape[0] > 0
    has_r = r.shape[0] > 0
    for t in range(nt):
        for q in range(nq):
            idx = t * nq + q
            w = qw[idx]
            for j in range(3):
                gjx = grads[t, j, 0]
                gjy = grads[t, j, 1]
                pj = basis[q, j]
                for k in range(3):
                    gkx = grads[t, k, 0]
                    gky = grads[t, k, 1]
                    pk = basis[q, k]
                    acc = 0.0
                    if has_a:
                        acc += (
                            (a[idx, 0, 0] * gkx + a[idx, 0, 1] * gky) * gjx
                            + (a[idx, 1, 0] * gkx + a[idx, 1, 1] * gky) * gjy
                        )
                    if has_b:
                        acc += (b[idx, 0] * gjx + b[idx, 1] * gjy) * pk
                    if has_c:
                        acc += (c[idx, 0] * gkx + c[idx, 1] * gky) * pj
                    if has_r:
                        acc += r[idx] * pj * pk
                    data[idx_map[t, j, k]] += w * acc


def assemble_matrix_data(conn, grads, qw, basis, idx_map, a, b, c, r, nnz):
    data = np.zeros(nnz)
    _assemble_matrix_data(conn, grads, qw, basis, idx_map, a, b, c, r, data)
    return data


@njit(cache=True)
def _matvec(indptr, indices, data, x, out):
    for i in range(len(out)):
        acc = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * x[indices[jj]]
        out[i] = acc


@njit(cache=True)
def cg_kernel(indptr, indices, data, b, tol_abs, maxiter):
    n = len(b)
    x = np.zeros(n)
    r = b.copy()
    p = r.copy()
    Ap = np.empty(n)
    rr = 0.0
    for i in range(n):
        rr += r[i] * r[i]
    tol2 = tol_abs * tol_abs
    iters = 0
    while rr > tol2:
        if iters >= maxiter:
            return x, iters, 1
        _matvec(indptr, indices, data, p, Ap)
        curv = 0.0
        for i in range(n):
            curv += p[i] * Ap[i]
        if curv <= 0.0:
            return x, iters, 3
        alpha = rr / curv
        rr_new = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * Ap[i]
            rr_new += r[i] * r[i]
        beta = rr_new / rr
        for i in range(n):
            p[i] = r[i] + beta * p[i]
        rr = rr_new
        iters += 1
    return x, iters, 0


@njit(cache=True)
def bicgstab_kernel(indptr, indices, data, b, tol_abs, maxiter):
    n = len(b)
    x = np.zeros(n)
    r = b.copy()
    r0 = r.copy()
    rho = 1.0
    alpha = 1.0
    omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    s = np.empty(n)
    t = np.empty(n)
    for iters in range(1, maxiter + 1):
        rho_new = 0.0
        for i in range(n):
            rho_new += r0[i] * r[i]
        if rho_new == 0.0 or omega == 0.0:
            return x, iters, 2
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        for i in range(n):
            p[i] = r[i] + beta * (p[i] - omega * v[i])
        _matvec(indptr, indices, data, p, v)
        denom = 0.0
        for i in range(n):
            denom += r0[i] * v[i]
        if denom == 0.0:
            return x, iters, 2
        alpha = rho / denom
        snorm2 = 0.0
        for i in range(n):
            s[i] = r[i] - alpha * v[i]
            snorm2 += s[i] * s[i]
        if np.sqrt(snorm2) <= tol_abs:
            for i in range(n):
                x[i] += alpha * p[i]
            return x, iters, 0
        _matvec(indptr, indices, data, s, t)
        tt = 0.0
        ts = 0.0
        for i in range(n):
            tt += t[i] * t[i]
            ts += t[i] * s[i]
        if tt == 0.0:
            return x, iters, 2
        omega = ts / tt
        rnorm2 = 0.0
        for i in range(n):
            x[i] += alpha * p[i] + omega * s[i]
            r[i] = s[i] - omega * t[i]
            rnorm2 += r[i] * r[i]
        if np.sqrt(rnorm2) <= tol_abs:
            return x, iters, 0
    return x, maxiter, 1
