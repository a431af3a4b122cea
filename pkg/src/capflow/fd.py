"""Finite-difference weights on arbitrary nodes and composite interpolatory quadrature."""
from __future__ import annotations

import numpy as np


def fd_weights(x0: float, nodes, m: int) -> np.ndarray:
    """Fornberg's recursion: weights c[k, j] for the k-th derivative at x0, k = 0..m."""
    x = np.asarray(nodes, dtype=float)
    n = x.size
    c = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def _window(i: int, s: int, n: int) -> np.ndarray:
    lo = min(max(i - s // 2, 0), n - s)
    return np.arange(lo, lo + s)


def _is_symmetric(x: np.ndarray, x0: float) -> bool:
    off = x - x0
    return np.allclose(np.sort(off), np.sort(-off), rtol=0, atol=1e-12 * max(1.0, np.ptp(x)))


def diff_matrices(nodes, targets, order: int):
    """First and second derivative matrices evaluated at `targets` (indices into nodes).

    Stencils hold order + 1 nodes; a second-derivative stencil that is not
    symmetric about its target gets one extra node so both stay order-accurate.
    """
    x = np.asarray(nodes, dtype=float)
    n = x.size
    D1 = np.zeros((len(targets), n))
    D2 = np.zeros((len(targets), n))
    s = order + 1
    for row, i in enumerate(targets):
        w = _window(i, s, n)
        D1[row, w] = fd_weights(x[i], x[w], 1)[1]
        if not _is_symmetric(x[w], x[i]):
            w = _window(i, s + 1, n)
        D2[row, w] = fd_weights(x[i], x[w], 2)[2]
    return D1, D2


def interp_row(nodes, x0: float, npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and Lagrange weights of the npts nodes nearest to x0."""
    x = np.asarray(nodes, dtype=float)
    idx = np.sort(np.argsort(np.abs(x - x0), kind="stable")[:npts])
    return idx, fd_weights(x0, x[idx], 0)[0]


def composite_weights(nodes, edges, degree: int) -> np.ndarray:
    """Quadrature weights on `nodes` for the integral over [edges[0], edges[-1]].

    Each panel [edges[p], edges[p+1]] integrates the degree-`degree` interpolant
    through the nodes nearest to the panel centre.
    """
    x = np.asarray(nodes, dtype=float)
    e = np.asarray(edges, dtype=float)
    gx, gw = np.polynomial.legendre.leggauss(degree // 2 + 2)
    w = np.zeros(x.size)
    for p in range(e.size - 1):
        lo, hi = e[p], e[p + 1]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        idx = np.sort(np.argsort(np.abs(x - mid), kind="stable")[: degree + 1])
        for t, g in zip(mid + half * gx, half * gw):
            w[idx] += g * fd_weights(t, x[idx], 0)[0]
    return w
