"""Compiled inner loops: planar diameter of prefix-sum point sets."""

import numba
import numpy as np


@numba.njit(cache=True)
def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


@numba.njit(cache=True)
def _lex_order(xs, ys, idx):
    """Indices ``idx`` sorted by (x, y)."""
    order = idx[np.argsort(xs[idx])]
    n = order.shape[0]
    i = 0
    while i < n:
        j = i + 1
        while j < n and xs[order[j]] == xs[order[i]]:
            j += 1
        if j - i > 1:
            run = order[i:j].copy()
            order[i:j] = run[np.argsort(ys[run], kind="mergesort")]
        i = j
    return order


@numba.njit(cache=True)
def _candidates(xs, ys):
    """Akl-Toussaint filter: drop points strictly inside the octagon spanned
    by the extremes in eight directions (they cannot be hull vertices)."""
    n = xs.shape[0]
    if n < 64:
        return np.arange(n)
    dx = np.array([1.0, 1.0, 0.0, -1.0, -1.0, -1.0, 0.0, 1.0])
    dy = np.array([0.0, 1.0, 1.0, 1.0, 0.0, -1.0, -1.0, -1.0])
    ext = np.zeros(8, dtype=np.int64)
    best = np.full(8, -np.inf)
    for i in range(n):
        for d in range(8):
            v = xs[i] * dx[d] + ys[i] * dy[d]
            if v > best[d]:
                best[d] = v
                ext[d] = i
    keep = np.ones(n, dtype=np.bool_)
    for i in range(n):
        inside = True
        for d in range(8):
            a = ext[d]
            b = ext[(d + 1) % 8]
            if a == b:
                continue
            if _cross(xs[a], ys[a], xs[b], ys[b], xs[i], ys[i]) <= 0.0:
                inside = False
                break
        if inside:
            keep[i] = False
    return np.flatnonzero(keep)


@numba.njit(cache=True)
def _hull(xs, ys):
    """Andrew's monotone chain. Returns hull vertex indices, counter-clockwise,
    collinear points dropped."""
    order = _lex_order(xs, ys, _candidates(xs, ys))
    n = order.shape[0]
    hull = np.empty(2 * n + 1, dtype=np.int64)
    k = 0
    for t in range(n):
        p = order[t]
        while k >= 2 and _cross(xs[hull[k - 2]], ys[hull[k - 2]],
                                xs[hull[k - 1]], ys[hull[k - 1]],
                                xs[p], ys[p]) <= 0.0:
            k -= 1
        hull[k] = p
        k += 1
    lower = k + 1
    for t in range(n - 2, -1, -1):
        p = order[t]
        while k >= lower and _cross(xs[hull[k - 2]], ys[hull[k - 2]],
                                    xs[hull[k - 1]], ys[hull[k - 1]],
                                    xs[p], ys[p]) <= 0.0:
            k -= 1
        hull[k] = p
        k += 1
    if k > 1:
        k -= 1
    return hull[:k]


@numba.njit(cache=True)
def diameter(xs, ys):
    """Largest pairwise distance in the point set, via rotating calipers.

    Returns (distance, i, j) with i, j indices into the input arrays.
    """
    n = xs.shape[0]
    if n < 2:
        return 0.0, 0, 0
    h = _hull(xs, ys)
    m = h.shape[0]
    if m == 1:
        return 0.0, h[0], h[0]
    if m == 2:
        d = np.hypot(xs[h[0]] - xs[h[1]], ys[h[0]] - ys[h[1]])
        return d, h[0], h[1]
    best = 0.0
    bi = h[0]
    bj = h[0]
    j = 1
    for i in range(m):
        i2 = (i + 1) % m
        # advance antipodal pointer while the triangle area grows
        while True:
            j2 = (j + 1) % m
            a1 = abs(_cross(xs[h[i]], ys[h[i]], xs[h[i2]], ys[h[i2]],
                            xs[h[j2]], ys[h[j2]]))
            a0 = abs(_cross(xs[h[i]], ys[h[i]], xs[h[i2]], ys[h[i2]],
                            xs[h[j]], ys[h[j]]))
            if a1 > a0:
                j = j2
            else:
                break
        for a in (h[i], h[i2]):
            for b in (h[j], h[(j + 1) % m]):
                d = np.hypot(xs[a] - xs[b], ys[a] - ys[b])
                if d > best:
                    best = d
                    bi = a
                    bj = b
    return best, bi, bj


@numba.njit(cache=True)
def diameter_rows(zr, zi):
    """Row-wise diameter of prefix-sum arrays of shape (m, t + 1)."""
    m = zr.shape[0]
    out = np.empty(m)
    ia = np.empty(m, dtype=np.int64)
    ib = np.empty(m, dtype=np.int64)
    for r in range(m):
        d, i, j = diameter(zr[r], zi[r])
        out[r] = d
        ia[r] = min(i, j)
        ib[r] = max(i, j)
    return out, ia, ib


_RESEED = 64


def unit_tables(exponent: int):
    """Two-level table of ``exp(i pi k / 2**exponent)``, ``0 <= k < 2**(exponent+1)``:
    value = hi[k >> lo_bits] * lo[k & (2**lo_bits - 1)]. Both halves stay small
    enough to live in cache."""
    bits = exponent + 1
    lo_bits = min(bits, max(11, (bits + 1) // 2))
    hi_bits = bits - lo_bits
    k_lo = np.arange(1 << lo_bits, dtype=np.float64)
    k_hi = np.arange(1 << hi_bits, dtype=np.float64) * (1 << lo_bits)
    lo = np.exp(1j * np.pi * k_lo / 2.0 ** exponent)
    hi = np.exp(1j * np.pi * k_hi / 2.0 ** exponent)
    return hi, lo, lo_bits


@numba.njit(cache=True)
def _rotations(off, h):
    t = off.shape[0]
    step = np.empty(t, dtype=np.complex128)
    for k in range(t):
        step[k] = complex(np.cos(off[k] * h), np.sin(off[k] * h))
    return step


@numba.njit(cache=True)
def _reseed(w, off, nz, xj):
    for i in range(nz.shape[0]):
        k = nz[i]
        w[k] = complex(np.cos(off[k] * xj), np.sin(off[k] * xj))


@numba.njit(cache=True)
def grid_terms(a_mod, n_mod, off, c, mask, hi, lo, lo_bits, x):
    """Matrix ``c_k exp(i lambda_k x_j)`` for consecutive grid nodes.

    The integer phase ``(a_j n_k) mod 2**(e+1)`` indexes exact tables; the
    offset phase is advanced by a rotation per node and recomputed directly
    every few nodes to bound drift.
    """
    m = a_mod.shape[0]
    t = n_mod.shape[0]
    out = np.empty((m, t), dtype=np.complex128)
    lo_mask = (1 << lo_bits) - 1
    h = x[1] - x[0] if m > 1 else 0.0
    step = _rotations(off, h)
    nz = np.flatnonzero(off != 0.0)
    w = np.ones(t, dtype=np.complex128)
    for j in range(m):
        if j % _RESEED == 0:
            _reseed(w, off, nz, x[j])
        aj = a_mod[j]
        for k in range(t):
            idx = (aj * n_mod[k]) & mask
            out[j, k] = c[k] * hi[idx >> lo_bits] * lo[idx & lo_mask] * w[k]
        for i in range(nz.shape[0]):
            w[nz[i]] *= step[nz[i]]
    return out


@numba.njit(cache=True)
def grid_sums(a_mod, n_mod, off, c, mask, hi, lo, lo_bits, x):
    """Row sums of :func:`grid_terms` without forming the matrix."""
    m = a_mod.shape[0]
    t = n_mod.shape[0]
    out = np.empty(m, dtype=np.complex128)
    lo_mask = (1 << lo_bits) - 1
    h = x[1] - x[0] if m > 1 else 0.0
    step = _rotations(off, h)
    nz = np.flatnonzero(off != 0.0)
    w = np.ones(t, dtype=np.complex128)
    for j in range(m):
        if j % _RESEED == 0:
            _reseed(w, off, nz, x[j])
        aj = a_mod[j]
        s = 0.0 + 0.0j
        for k in range(t):
            idx = (aj * n_mod[k]) & mask
            s += c[k] * hi[idx >> lo_bits] * lo[idx & lo_mask] * w[k]
        out[j] = s
        for i in range(nz.shape[0]):
            w[nz[i]] *= step[nz[i]]
    return out


@numba.njit(cache=True)
def row_sums(T):
    m, t = T.shape
    out = np.empty(m, dtype=np.complex128)
    for j in range(m):
        s = 0.0 + 0.0j
        for k in range(t):
            s += T[j, k]
        out[j] = s
    return out


@numba.njit(cache=True)
def prefix_diameters(T):
    """Diameter of ``{0, T[j,0], T[j,0]+T[j,1], ...}`` for each row."""
    m, t = T.shape
    out = np.empty(m)
    zr = np.empty(t + 1)
    zi = np.empty(t + 1)
    for j in range(m):
        zr[0] = 0.0
        zi[0] = 0.0
        for k in range(t):
            zr[k + 1] = zr[k] + T[j, k].real
            zi[k + 1] = zi[k] + T[j, k].imag
        d, _, _ = diameter(zr, zi)
        out[j] = d
    return out
