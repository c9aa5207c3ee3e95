"""Proximal operators for the structured penalties on the weight matrix.

All operators act on a single feature row (length ``k``, one entry per task)
or, for the ``*_rows`` variants, on every row of a ``d x k`` matrix at once.
"""

import numba
import numpy as np


def soft_threshold(z, lam):
    """Prox of ``lam * ||.||_1``, elementwise."""
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def group_row_prox(row, lam):
    """Prox of ``lam * ||.||_2`` for one feature row (block soft-threshold)."""
    row = np.asarray(row, dtype=float)
    nrm = np.linalg.norm(row)
    if nrm <= lam:
        return np.zeros_like(row)
    return row * (1.0 - lam / nrm)


def group_rows_prox(W, lam):
    """Row-wise group prox, i.e. the prox of ``lam * ||W||_{2,1}``."""
    W = np.asarray(W, dtype=float)
    if lam == 0:
        return W.copy()
    norms = np.linalg.norm(W, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > lam, 1.0 - lam / norms, 0.0)
    return W * scale


@numba.njit(cache=True)
def _tv1d(y, lam, out):
    # Condat's direct algorithm for 1-D total-variation denoising.
    n = y.shape[0]
    if n == 0:
        return
    if n == 1 or lam <= 0.0:
        for i in range(n):
            out[i] = y[i]
        return
    k = 0
    k0 = 0
    kplus = 0
    kminus = 0
    umin = lam
    umax = -lam
    vmin = y[0] - lam
    vmax = y[0] + lam
    twolam = 2.0 * lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = k0
                kminus = k0
                vmin = y[k0]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k0
                vmax = y[k0]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                return
        umin += y[k + 1] - vmin
        if umin < -lam:
            while True:
                out[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = k0
            kminus = k0
            kplus = k0
            vmin = y[k0]
            vmax = vmin + twolam
            umin = lam
            umax = -lam
        else:
            umax += y[k + 1] - vmax
            if umax > lam:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kminus = k0
                kplus = k0
                vmax = y[k0]
                vmin = vmax - twolam
                umin = lam
                umax = -lam
            else:
                k += 1
                if umin >= lam:
                    kminus = k
                    vmin += (umin - lam) / (kminus - k0 + 1)
                    umin = lam
                if umax <= -lam:
                    kplus = k
                    vmax += (umax + lam) / (kplus - k0 + 1)
                    umax = -lam


@numba.njit(cache=True)
def _tv1d_rows(Z, lam, out):
    for i in range(Z.shape[0]):
        _tv1d(Z[i], lam, out[i])


@numba.njit(cache=True)
def _fsgl_rows(Z, lam1, lam2, lam3, out):
    d, k = Z.shape
    buf = np.empty(k)
    for i in range(d):
        _tv1d(Z[i], lam2, buf)
        nrm = 0.0
        for j in range(k):
            v = buf[j]
            a = abs(v) - lam1
            if a > 0.0:
                v = a if v > 0.0 else -a
            else:
                v = 0.0
            buf[j] = v
            nrm += v * v
        nrm = np.sqrt(nrm)
        if nrm <= lam3:
            for j in range(k):
                out[i, j] = 0.0
        else:
            s = 1.0 - lam3 / nrm
            for j in range(k):
                out[i, j] = buf[j] * s


def fused_prox_1d(z, lam):
    """Exact prox of ``lam * sum_j |x[j+1] - x[j]|`` (1-D total variation).

    Uses Condat's direct taut-string style algorithm, so the result is exact
    up to floating point rather than the output of an inner iterative solver.
    """
    z = np.ascontiguousarray(z, dtype=float)
    if z.ndim != 1:
        raise ValueError("fused_prox_1d expects a 1-D vector")
    out = np.empty_like(z)
    _tv1d(z, float(lam), out)
    return out


def fused_rows_prox(W, lam):
    W = np.ascontiguousarray(W, dtype=float)
    out = np.empty_like(W)
    _tv1d_rows(W, float(lam), out)
    return out


def fsgl_prox(row, lam1, lam2, lam3):
    """Prox of ``lam1*||x||_1 + lam2*TV(x) + lam3*||x||_2`` for one row.

    Evaluated as fused prox, then soft-threshold, then group shrinkage. That
    composition is the exact prox of the sum for this penalty family.
    """
    row = np.ascontiguousarray(row, dtype=float)
    out = np.empty((1, row.shape[0]))
    _fsgl_rows(row[None, :], float(lam1), float(lam2), float(lam3), out)
    return out[0]


def fsgl_rows_prox(W, lam1, lam2, lam3):
    W = np.ascontiguousarray(W, dtype=float)
    out = np.empty_like(W)
    _fsgl_rows(W, float(lam1), float(lam2), float(lam3), out)
    return out


def fsgl_penalty(row, lam1, lam2, lam3):
    row = np.asarray(row, dtype=float)
    return (lam1 * np.abs(row).sum() + lam2 * np.abs(np.diff(row)).sum()
            + lam3 * np.linalg.norm(row))
