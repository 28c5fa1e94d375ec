"""Isotonic projection kernels.

``pava`` is the weighted pool-adjacent-violators solver for a single vector.
``project_biso`` projects a matrix onto the set of matrices with
non-decreasing rows, non-decreasing columns and entries in [0, 1], using
Dykstra's alternating projections over those three convex sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import Matrix, Permutation, as_matrix, permute_matrix

DEFAULT_TOL = 1e-8
DEFAULT_MAX_CYCLES = 5000


@numba.njit(cache=True)
def _pava_into(y, w, out, level, weight, start):
    # Stack of pooled blocks: (level, weight, start index); merged while the
    # top block's level drops strictly below the one beneath it, so already
    # monotone input passes through bit for bit.
    n = y.shape[0]
    top = -1
    for i in range(n):
        top += 1
        level[top] = y[i]
        weight[top] = w[i]
        start[top] = i
        while top > 0 and level[top - 1] > level[top]:
            wt = weight[top - 1] + weight[top]
            level[top - 1] = (weight[top - 1] * level[top - 1] + weight[top] * level[top]) / wt
            weight[top - 1] = wt
            top -= 1
    for b in range(top + 1):
        stop = start[b + 1] if b < top else n
        for i in range(start[b], stop):
            out[i] = level[b]


@numba.njit(cache=True)
def _dykstra(Y, tol, max_cycles):
    n1, n2 = Y.shape
    m = max(n1, n2)
    x = Y.copy()
    p = np.zeros_like(Y)
    q = np.zeros_like(Y)
    r = np.zeros_like(Y)
    a = np.empty_like(Y)
    ones = np.ones(m)
    buf = np.empty(m)
    sol = np.empty(m)
    level = np.empty(m)
    weight = np.empty(m)
    start = np.empty(m, dtype=np.int64)
    residual = np.inf
    cycles = 0
    while cycles < max_cycles:
        cycles += 1
        # rows: a = P_rows(x + p), p <- x + p - a
        for i in range(n1):
            for j in range(n2):
                buf[j] = x[i, j] + p[i, j]
            _pava_into(buf[:n2], ones[:n2], sol[:n2], level, weight, start)
            for j in range(n2):
                p[i, j] = buf[j] - sol[j]
                a[i, j] = sol[j]
        # columns: b = P_cols(a + q), q <- a + q - b; b is stored in a
        for j in range(n2):
            for i in range(n1):
                buf[i] = a[i, j] + q[i, j]
            _pava_into(buf[:n1], ones[:n1], sol[:n1], level, weight, start)
            for i in range(n1):
                q[i, j] = buf[i] - sol[i]
                a[i, j] = sol[i]
        # box: x <- clamp(b + r), r <- b + r - x
        residual = 0.0
        for i in range(n1):
            for j in range(n2):
                v = a[i, j] + r[i, j]
                c = min(max(v, 0.0), 1.0)
                r[i, j] = v - c
                d = abs(c - x[i, j])
                if d > residual:
                    residual = d
                x[i, j] = c
        if residual <= tol:
            break
    # Polish: rows, then columns, then the box.  Column PAVA keeps rows
    # sorted (PAVA is order preserving), so the output is exactly feasible.
    for i in range(n1):
        for j in range(n2):
            buf[j] = x[i, j]
        _pava_into(buf[:n2], ones[:n2], sol[:n2], level, weight, start)
        for j in range(n2):
            x[i, j] = sol[j]
    for j in range(n2):
        for i in range(n1):
            buf[i] = x[i, j]
        _pava_into(buf[:n1], ones[:n1], sol[:n1], level, weight, start)
        for i in range(n1):
            x[i, j] = min(max(sol[i], 0.0), 1.0)
    return x, cycles, residual


def pava(v, w=None) -> np.ndarray:
    """Weighted least-squares projection of ``v`` onto non-decreasing vectors.

    Linear-time stack-based pooling of adjacent violators.
    """
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("pava expects a 1-D vector")
    w = np.ones_like(v) if w is None else np.ascontiguousarray(w, dtype=np.float64)
    if w.shape != v.shape:
        raise ValueError("weights must match the length of v")
    if np.any(~(w > 0)):
        raise ValueError("weights must be strictly positive")
    n = v.size
    out = np.empty(n)
    if n:
        _pava_into(v, w, out, np.empty(n), np.empty(n), np.empty(n, dtype=np.int64))
    return out


@dataclass(frozen=True)
class ProjectionReport:
    result: Matrix
    iterations: int
    residual: float
    converged: bool


def project_biso(Y, tol: float = DEFAULT_TOL, max_cycles: int = DEFAULT_MAX_CYCLES) -> ProjectionReport:
    """Euclidean projection of ``Y`` onto bivariate isotonic matrices in [0, 1].

    Each Dykstra cycle applies row-wise PAVA, column-wise PAVA and the box
    clamp, each with its own correction term.  ``residual`` is the largest
    entry change over the last cycle; failing to reach ``tol`` within
    ``max_cycles`` is reported through ``converged``, not raised.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_cycles < 1:
        raise ValueError("max_cycles must be at least 1")
    Y = np.ascontiguousarray(as_matrix(Y, name="Y"))
    x, cycles, residual = _dykstra(Y, float(tol), int(max_cycles))
    return ProjectionReport(x, int(cycles), float(residual), bool(residual <= tol))


def project_biso_permuted(
    Y,
    pi_hat: Permutation,
    sigma_hat: Permutation,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> Matrix:
    """Project onto matrices that are bivariate isotonic along ``(pi_hat, sigma_hat)``.

    Rows and columns of ``Y`` are placed at the positions given by the rank
    maps, the sorted matrix is projected, and the result is mapped back.
    """
    return project_biso_permuted_report(Y, pi_hat, sigma_hat, tol, max_cycles).result


def project_biso_permuted_report(
    Y,
    pi_hat: Permutation,
    sigma_hat: Permutation,
    tol: float = DEFAULT_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> ProjectionReport:
    Y = as_matrix(Y, name="Y")
    sorted_Y = permute_matrix(Y, pi_hat.inverse(), sigma_hat.inverse())
    report = project_biso(sorted_Y, tol, max_cycles)
    back = permute_matrix(report.result, pi_hat, sigma_hat)
    return ProjectionReport(back, report.iterations, report.residual, report.converged)
