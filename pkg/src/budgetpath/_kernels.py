"""Compiled inner loops: fast marching, fast sweeping, budget-slice sweep."""
import heapq
import math

import numpy as np
from numba import njit

INF = np.inf
_DI = (1, -1, 0, 0)
_DJ = (0, 0, 1, -1)


@njit(cache=True)
def _local_update(a, b, aux_a, aux_b, s, sa):
    """Upwind solve of |grad u| = s/h from the best x- and y-neighbours.

    Returns the new value and the auxiliary cost carried along the same
    characteristic (foot on the segment between the two neighbours).
    """
    if a == INF and b == INF:
        return INF, INF
    if a == INF or b == INF or abs(a - b) >= s:
        if a < b or (a == b and aux_a <= aux_b):
            return a + s, aux_a + sa
        return b + s, aux_b + sa
    u = 0.5 * (a + b + math.sqrt(2.0 * s * s - (a - b) * (a - b)))
    lam = (u - a) / (2.0 * u - a - b)
    aux = sa * math.sqrt(lam * lam + (1.0 - lam) * (1.0 - lam)) + lam * aux_a + (1.0 - lam) * aux_b
    return u, aux


@njit(cache=True)
def _best_pair(u, aux, ok, i, j, n):
    """Smallest usable neighbour along x and along y (ties: smaller aux)."""
    a = INF
    aa = INF
    b = INF
    ab = INF
    for k in range(4):
        p = i + _DI[k]
        q = j + _DJ[k]
        if p < 0 or q < 0 or p >= n or q >= n or not ok[p, q]:
            continue
        v = u[p, q]
        w = aux[p, q]
        if k < 2:
            if v < a or (v == a and w < aa):
                a = v
                aa = w
        else:
            if v < b or (v == b and w < ab):
                b = v
                ab = w
    return a, aa, b, ab


@njit(cache=True)
def fast_march(active, s, sa, data, data_aux):
    """Fast marching on ``active`` gridpoints.

    ``s`` and ``sa`` are per-gridpoint step costs ``h*K/f`` for the value and
    the auxiliary quantity. Points with finite ``data`` are fixed sources;
    they are never updated. The heap holds ``(value, flat index)`` pairs, so
    equal values pop lowest index first.
    """
    n = active.shape[0]
    u = np.full((n, n), INF)
    aux = np.full((n, n), INF)
    known = np.zeros((n, n), dtype=np.bool_)
    fixed = np.zeros((n, n), dtype=np.bool_)
    heap = [(0.0, 0)]
    heap.pop()
    for i in range(n):
        for j in range(n):
            if data[i, j] < INF:
                fixed[i, j] = True
                u[i, j] = data[i, j]
                aux[i, j] = data_aux[i, j]
                heapq.heappush(heap, (data[i, j], i * n + j))
    while len(heap) > 0:
        val, idx = heapq.heappop(heap)
        i = idx // n
        j = idx % n
        if known[i, j] or val > u[i, j]:
            continue
        known[i, j] = True
        for k in range(4):
            p = i + _DI[k]
            q = j + _DJ[k]
            if p < 0 or q < 0 or p >= n or q >= n:
                continue
            if known[p, q] or fixed[p, q] or not active[p, q]:
                continue
            a, aa, b, ab = _best_pair(u, aux, known, p, q, n)
            nu, na = _local_update(a, b, aa, ab, s[p, q], sa[p, q])
            if nu < u[p, q] or (nu == u[p, q] and na < aux[p, q]):
                u[p, q] = nu
                aux[p, q] = na
                heapq.heappush(heap, (nu, p * n + q))
    return u, aux


@njit(cache=True)
def fast_sweep(active, s, data, max_rounds):
    """Gauss-Seidel sweeps in the four diagonal orderings until nothing changes."""
    n = active.shape[0]
    u = np.full((n, n), INF)
    fixed = np.zeros((n, n), dtype=np.bool_)
    every = np.ones((n, n), dtype=np.bool_)
    dummy = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if data[i, j] < INF:
                u[i, j] = data[i, j]
                fixed[i, j] = True
    for r in range(max_rounds):
        change = 0.0
        for order in range(4):
            for ii in range(n):
                i = ii if order % 2 == 0 else n - 1 - ii
                for jj in range(n):
                    j = jj if order < 2 else n - 1 - jj
                    if fixed[i, j] or not active[i, j]:
                        continue
                    a, aa, b, ab = _best_pair(u, dummy, every, i, j, n)
                    nu, _ = _local_update(a, b, 0.0, 0.0, s[i, j], 0.0)
                    if nu < u[i, j]:
                        d = u[i, j] - nu if u[i, j] < INF else INF
                        if d > change:
                            change = d
                        u[i, j] = nu
        if change == 0.0:
            return u, r + 1
    return u, max_rounds


@njit(cache=True)
def _snap(g):
    # round-off weights next to an infinite corner must not poison the sample
    if g < 1e-10:
        return 0.0
    if g > 1.0 - 1e-10:
        return 1.0
    return g


@njit(cache=True)
def mixed_sample(W1, j, W2, cls, x, y, n, h):
    """Bilinear value at (x, y) reading slice ``j`` on unsafe corners, W2 on safe ones.

    Returns NaN when the point is outside the grid or its cell has an
    obstacle corner (the caller drops that direction).
    """
    gx = (x + 1.0) / h
    gy = (y + 1.0) / h
    if gx < -1e-12 or gy < -1e-12 or gx > n - 1 + 1e-12 or gy > n - 1 + 1e-12:
        return np.nan
    i = int(math.floor(gx))
    k = int(math.floor(gy))
    if i > n - 2:
        i = n - 2
    if k > n - 2:
        k = n - 2
    if i < 0:
        i = 0
    if k < 0:
        k = 0
    g1 = _snap(gx - i)
    g2 = _snap(gy - k)
    tot = 0.0
    for c in range(4):
        if c == 0:
            p, q, w = i, k, (1.0 - g1) * (1.0 - g2)
        elif c == 1:
            p, q, w = i + 1, k, g1 * (1.0 - g2)
        elif c == 2:
            p, q, w = i + 1, k + 1, g1 * g2
        else:
            p, q, w = i, k + 1, (1.0 - g1) * g2
        t = cls[p, q]
        if t == 2:
            return np.nan
        if w == 0.0:
            continue
        v = W2[p, q] if t == 0 else W1[j, p, q]
        if v == INF:
            return INF
        tot += w * v
    return tot


@njit(cache=True)
def _sl_value(W1, j, W2, cls, x, y, step, run, th, n, h):
    v = mixed_sample(W1, j, W2, cls, x + step * math.cos(th), y + step * math.sin(th), n, h)
    if v != v:
        return INF
    return run + v


_GOLD = 0.5 * (math.sqrt(5.0) - 1.0)


@njit(cache=True)
def semi_lagrangian_argmin(W1, j, W2, cls, x, y, step, run, ntheta, refine, n, h):
    """Best direction for ``run + W(x + step*a, b_j)`` over sampled angles.

    The best sample is refined by golden-section search within one angular
    spacing on either side. Returns ``(value, angle)``.
    """
    best = INF
    bth = 0.0
    dth = 2.0 * math.pi / ntheta
    for m in range(ntheta):
        th = m * dth
        v = _sl_value(W1, j, W2, cls, x, y, step, run, th, n, h)
        if v < best:
            best = v
            bth = th
    if refine > 0 and best < INF:
        lo = bth - dth
        hi = bth + dth
        c = hi - _GOLD * (hi - lo)
        d = lo + _GOLD * (hi - lo)
        fc = _sl_value(W1, j, W2, cls, x, y, step, run, c, n, h)
        fd = _sl_value(W1, j, W2, cls, x, y, step, run, d, n, h)
        for _ in range(refine):
            if fc < fd:
                hi = d
                d = c
                fd = fc
                c = hi - _GOLD * (hi - lo)
                fc = _sl_value(W1, j, W2, cls, x, y, step, run, c, n, h)
            else:
                lo = c
                c = d
                fc = fd
                d = lo + _GOLD * (hi - lo)
                fd = _sl_value(W1, j, W2, cls, x, y, step, run, d, n, h)
        if fc < best:
            best = fc
            bth = c
        if fd < best:
            best = fd
            bth = d
    return best, bth


@njit(cache=True)
def budget_sweep(W1, W2, cls, V, Ut, U, f, K, Khat, h, db, ntheta, refine, early_exit):
    """Fill ``W1[j]`` for unsafe gridpoints, lowest level first.

    The first level at or above the minimum feasible level takes ``Ut``.
    Above it, a point whose previous level already equals the unconstrained
    value keeps it (when ``early_exit``); otherwise the semi-Lagrangian step
    down one level is taken. Values never rise with the level.
    """
    nb, n, _ = W1.shape
    for j in range(nb):
        for i in range(n):
            x = -1.0 + i * h
            for k in range(n):
                if cls[i, k] != 1:
                    W1[j, i, k] = INF
                    continue
                v = V[i, k]
                if v == INF:
                    W1[j, i, k] = INF
                    continue
                j0 = int(math.ceil(v / db - 1e-9))
                if j < j0:
                    W1[j, i, k] = INF
                elif j == j0:
                    W1[j, i, k] = Ut[i, k]
                elif early_exit and W1[j - 1, i, k] == U[i, k]:
                    W1[j, i, k] = U[i, k]
                else:
                    tau = db / Khat[i, k]
                    y = -1.0 + k * h
                    val, _ = semi_lagrangian_argmin(W1, j - 1, W2, cls, x, y, tau * f[i, k],
                                                    tau * K[i, k], ntheta, refine, n, h)
                    prev = W1[j - 1, i, k]
                    W1[j, i, k] = val if val < prev else prev
    return W1
