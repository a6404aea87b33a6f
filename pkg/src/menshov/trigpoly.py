"""Finite exponential sums with real frequencies.

A frequency is stored as an exact pair ``(integer_part, offset)`` with the
offset canonically in (-1/2, 1/2]. Ordering, equality and term merging use
the pair, never a rounded real, so ``n + r`` and ``n + s`` stay distinct for
``r != s`` no matter how large ``n`` is.

Phases ``lambda * x`` are reduced modulo ``2*pi`` in two pieces: the integer
part exactly (integer arithmetic on dyadic grids, extended precision or exact
rationals for scattered points) and the small offset part in floating point.
"""

from __future__ import annotations

import bisect
import functools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator

import mpmath
import numpy as np

from . import _kernels
from .errors import PreconditionError
from .grid import Grid

__all__ = [
    "Frequency", "TrigPoly", "BlockProduct", "evaluate", "coeff_norms",
    "majorant", "window_sum", "contract", "multiply", "add", "special_product",
    "sup_majorant", "exponential_matrix",
]

_INT_LIMIT = 2 ** 62
_CHUNK = 1 << 21
# exact-rational reduction modulus: 2*pi scaled by 2**_PI_BITS
_PI_BITS = 320
with mpmath.workprec(_PI_BITS + 64):
    _TWO_PI_SCALED = int(mpmath.floor(2 * mpmath.pi * mpmath.mpf(2) ** _PI_BITS))
# products |n * x| below this are taken in 80-bit extended precision
_LONGDOUBLE_LIMIT = 4096.0


def _canonical(n, off):
    """Shift integer units out of ``off`` so that it lies in (-1/2, 1/2]."""
    s = np.ceil(np.asarray(off, dtype=float) - 0.5)
    return np.asarray(n, dtype=np.int64) + s.astype(np.int64), off - s


@functools.total_ordering
@dataclass(frozen=True)
class Frequency:
    integer_part: int
    offset: float

    def __post_init__(self):
        n, off = int(self.integer_part), float(self.offset)
        s = math.ceil(off - 0.5)
        object.__setattr__(self, "integer_part", n + s)
        object.__setattr__(self, "offset", off - s)

    @classmethod
    def from_real(cls, value: float) -> "Frequency":
        n = round(value)
        return cls(n, value - n)

    @property
    def value(self) -> float:
        return self.integer_part + self.offset

    def _key(self):
        return (self.integer_part, self.offset)

    def __lt__(self, other):
        return self._key() < _as_frequency(other)._key()

    def __eq__(self, other):
        if not isinstance(other, (Frequency, int, float)):
            return NotImplemented
        return self._key() == _as_frequency(other)._key()

    def __hash__(self):
        return hash(self._key())


def _as_frequency(f) -> Frequency:
    if isinstance(f, Frequency):
        return f
    if isinstance(f, tuple):
        return Frequency(*f)
    if isinstance(f, (int, np.integer)):
        return Frequency(int(f), 0.0)
    return Frequency.from_real(float(f))


class TrigPoly:
    """Immutable finite sum ``sum_k c_k exp(i (n_k + r_k) x)``.

    Terms are held in three parallel arrays sorted strictly ascending by
    frequency; zero coefficients are never stored.
    """

    __slots__ = ("n", "off", "c")

    def __init__(self, n, off, c, *, _trusted=False):
        n = np.asarray(n, dtype=np.int64).reshape(-1)
        off = np.asarray(off, dtype=float).reshape(-1)
        c = np.asarray(c, dtype=complex).reshape(-1)
        if not _trusted:
            if not (len(n) == len(off) == len(c)):
                raise ValueError("term arrays differ in length")
            n, off = _canonical(n, off)
            n, off, c = _merge(n, off, c)
        for a in (n, off, c):
            a.setflags(write=False)
        self.n, self.off, self.c = n, off, c

    @classmethod
    def from_terms(cls, terms: Iterable) -> "TrigPoly":
        """Build from ``(frequency, coefficient)`` pairs. A frequency may be a
        :class:`Frequency`, an ``(integer, offset)`` tuple, or a real number.
        Repeated frequencies are merged by adding coefficients."""
        ns, offs, cs = [], [], []
        for f, c in terms:
            f = _as_frequency(f)
            ns.append(f.integer_part)
            offs.append(f.offset)
            cs.append(c)
        return cls(ns, offs, cs)

    @classmethod
    def empty(cls) -> "TrigPoly":
        return cls([], [], [])

    def __len__(self):
        return len(self.c)

    def __iter__(self) -> Iterator[tuple[Frequency, complex]]:
        for n, off, c in zip(self.n, self.off, self.c):
            yield Frequency(int(n), float(off)), complex(c)

    def __repr__(self):
        head = ", ".join(f"({f.value:g}, {c:g})" for f, c in list(self)[:4])
        more = ", ..." if len(self) > 4 else ""
        return f"TrigPoly([{head}{more}], terms={len(self)})"

    def __eq__(self, other):
        if not isinstance(other, TrigPoly):
            return NotImplemented
        return (np.array_equal(self.n, other.n)
                and np.array_equal(self.off, other.off)
                and np.array_equal(self.c, other.c))

    __hash__ = None

    @property
    def values(self) -> np.ndarray:
        """Frequencies as rounded reals (display and coarse geometry only)."""
        return self.n + self.off

    @property
    def frequencies(self) -> list[Frequency]:
        return [f for f, _ in self]

    def is_integer_spectrum(self) -> bool:
        return bool(np.all(self.off == 0.0))

    def degree(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(max(abs(self.n[0] + self.off[0]), abs(self.n[-1] + self.off[-1])))

    def coefficient(self, freq) -> complex:
        f = _as_frequency(freq)
        i = _locate(self.n, self.off, f.integer_part, f.offset)
        return complex(self.c[i]) if i >= 0 else 0.0j

    def scaled(self, factor: complex) -> "TrigPoly":
        return TrigPoly(self.n, self.off, self.c * factor)

    def __neg__(self):
        return self.scaled(-1)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, -other)

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            return multiply(self, other)
        return self.scaled(other)

    __rmul__ = __mul__

    def __call__(self, x):
        return evaluate(self, x)

    # serialization
    def to_records(self) -> list[dict]:
        return [{"n": int(n), "offset": f"{off:.16e}", "re": float(c.real),
                 "im": float(c.imag)} for n, off, c in zip(self.n, self.off, self.c)]

    @classmethod
    def from_records(cls, records) -> "TrigPoly":
        return cls([r["n"] for r in records], [float(r["offset"]) for r in records],
                   [complex(r["re"], r["im"]) for r in records])

    def to_json(self) -> str:
        return json.dumps(self.to_records())

    @classmethod
    def from_json(cls, text: str) -> "TrigPoly":
        return cls.from_records(json.loads(text))


def _merge(n, off, c):
    order = np.lexsort((off, n))
    n, off, c = n[order], off[order], c[order]
    if len(n) > 1:
        new = np.empty(len(n), dtype=bool)
        new[0] = True
        new[1:] = (n[1:] != n[:-1]) | (off[1:] != off[:-1])
        if not new.all():
            starts = np.flatnonzero(new)
            c = np.add.reduceat(c, starts)
            n, off = n[starts], off[starts]
    keep = c != 0
    return n[keep].copy(), off[keep].copy(), c[keep].copy()


def _locate(n_arr, off_arr, n, off) -> int:
    lo = np.searchsorted(n_arr, n, side="left")
    hi = np.searchsorted(n_arr, n, side="right")
    for i in range(lo, hi):
        if off_arr[i] == off:
            return i
    return -1


# ---------------------------------------------------------------- phases

def _reduce_exact(n: int, x: float) -> float:
    """``n * x mod 2*pi`` in [0, 2*pi) from exact rational arithmetic."""
    num, den = float(x).as_integer_ratio()
    p = n * num << _PI_BITS
    q = den * _TWO_PI_SCALED
    r = p % q
    return float(Fraction(r, den << _PI_BITS))


def _phase_matrix_points(P: TrigPoly, x: np.ndarray) -> np.ndarray:
    """Angles (len(x), len(P)) for scattered evaluation points."""
    x = np.asarray(x, dtype=float)
    n = P.n
    small = np.abs(n.astype(float)) * (np.max(np.abs(x)) if x.size else 0.0) <= _LONGDOUBLE_LIMIT
    theta = np.empty((x.size, len(n)), dtype=np.longdouble)
    if small.any():
        xl = x.astype(np.longdouble)[:, None]
        theta[:, small] = n[small].astype(np.longdouble)[None, :] * xl
    for k in np.flatnonzero(~small):
        nk = int(n[k])
        theta[:, k] = [_reduce_exact(nk, xi) for xi in x]
    theta += P.off.astype(np.longdouble)[None, :] * x.astype(np.longdouble)[:, None]
    return theta


@functools.lru_cache(maxsize=8)
def _tables(exponent: int):
    return _kernels.unit_tables(exponent)


def _grid_args(P: TrigPoly, grid: Grid, rows: slice):
    """Kernel arguments; integer phases are reduced exactly modulo 2 pi."""
    e = grid.exponent
    mod = 1 << (e + 1)
    a = grid.integer_nodes()[rows] % mod
    nm = np.array([int(v) % mod for v in P.n], dtype=np.int64)
    hi, lo, lo_bits = _tables(e)
    return (a, nm, np.ascontiguousarray(P.off), np.ascontiguousarray(P.c),
            mod - 1, hi, lo, lo_bits, grid.nodes()[rows])


def _grid_terms(P: TrigPoly, grid: Grid, rows: slice) -> np.ndarray:
    return _kernels.grid_terms(*_grid_args(P, grid, rows))


def _unit(theta) -> np.ndarray:
    if theta.dtype == np.longdouble:
        return (np.cos(theta).astype(float) + 1j * np.sin(theta).astype(float))
    return np.cos(theta) + 1j * np.sin(theta)


def _row_chunks(m: int, t: int):
    step = max(1, _CHUNK // max(t, 1))
    for start in range(0, m, step):
        yield slice(start, min(m, start + step))


def _terms_matrix(P: TrigPoly, x, rows: slice) -> np.ndarray:
    """``c_k exp(i lambda_k x_j)`` for the requested rows of the points."""
    if isinstance(x, Grid):
        return _grid_terms(P, x, rows)
    theta = _phase_matrix_points(P, np.asarray(x, dtype=float)[rows])
    return _unit(theta) * P.c[None, :]


def _points_count(x) -> int:
    return x.count if isinstance(x, Grid) else np.asarray(x).size


# ---------------------------------------------------------------- operations

def evaluate(P: TrigPoly, x):
    """``sum_k c_k exp(i lambda_k x)`` at a scalar, an array of points, or every
    node of a :class:`Grid`."""
    scalar = np.ndim(x) == 0 and not isinstance(x, Grid)
    pts = x if isinstance(x, Grid) else np.atleast_1d(np.asarray(x, dtype=float))
    m = _points_count(pts)
    out = np.zeros(m, dtype=complex)
    if len(P) and isinstance(pts, Grid):
        out[:] = _kernels.grid_sums(*_grid_args(P, pts, slice(None)))
    elif len(P):
        for rows in _row_chunks(m, len(P)):
            out[rows] = _kernels.row_sums(_terms_matrix(P, pts, rows))
    return complex(out[0]) if scalar else out


def coeff_norms(P: TrigPoly) -> tuple[float, float, float]:
    """``(sum |c|, max |c|, degree)``; zeros for the empty polynomial."""
    if len(P) == 0:
        return 0.0, 0.0, 0.0
    a = np.abs(P.c)
    return math.fsum(a), float(a.max()), P.degree()


def prefix_sums(P: TrigPoly, x, rows: slice | None = None) -> np.ndarray:
    """Partial sums ``Z_0 = 0, Z_j = sum_{k<j} terms`` in frequency order;
    shape (points, len(P) + 1)."""
    pts = x if isinstance(x, Grid) else np.atleast_1d(np.asarray(x, dtype=float))
    m = _points_count(pts)
    rows = rows or slice(0, m)
    T = _terms_matrix(P, pts, rows)
    Z = np.zeros((T.shape[0], len(P) + 1), dtype=complex)
    np.cumsum(T, axis=1, out=Z[:, 1:])
    return Z


def _majorant_fast(P: TrigPoly, x):
    scalar = np.ndim(x) == 0 and not isinstance(x, Grid)
    pts = x if isinstance(x, Grid) else np.atleast_1d(np.asarray(x, dtype=float))
    m = _points_count(pts)
    out = np.zeros(m)
    if len(P):
        for rows in _row_chunks(m, len(P) + 1):
            out[rows] = _kernels.prefix_diameters(_terms_matrix(P, pts, rows))
    return float(out[0]) if scalar else out


def _majorant_brute(Z: np.ndarray) -> np.ndarray:
    out = np.empty(Z.shape[0])
    for r, z in enumerate(Z):
        out[r] = np.abs(z[:, None] - z[None, :]).max()
    return out


def majorant(P: TrigPoly, x, method: str = "diameter", return_windows: bool = False):
    """Non-symmetric partial-sum majorant ``P*(x)``.

    The windowed sums over contiguous runs of terms are differences of prefix
    sums, so ``P*(x)`` is the diameter of ``{Z_0, ..., Z_t}``. ``diameter``
    uses a convex hull and rotating calipers; ``bruteforce`` checks every pair.

    With ``return_windows`` (diameter method only) also returns, per point,
    the half-open term-index range ``[i, j)`` of a maximizing window.
    """
    if method not in ("diameter", "bruteforce"):
        raise ValueError(f"unknown method {method!r}")
    if method == "diameter" and not return_windows:
        return _majorant_fast(P, x)
    scalar = np.ndim(x) == 0 and not isinstance(x, Grid)
    pts = x if isinstance(x, Grid) else np.atleast_1d(np.asarray(x, dtype=float))
    m = _points_count(pts)
    out = np.zeros(m)
    ia = np.zeros(m, dtype=np.int64)
    ib = np.zeros(m, dtype=np.int64)
    if len(P):
        for rows in _row_chunks(m, len(P) + 1):
            Z = prefix_sums(P, pts, rows)
            if method == "bruteforce":
                out[rows] = _majorant_brute(Z)
            else:
                d, i, j = _kernels.diameter_rows(np.ascontiguousarray(Z.real),
                                                 np.ascontiguousarray(Z.imag))
                out[rows], ia[rows], ib[rows] = d, i, j
    if return_windows:
        return (float(out[0]), (int(ia[0]), int(ib[0]))) if scalar else (out, ia, ib)
    return float(out[0]) if scalar else out


def window_sum(P: TrigPoly, a, b, x):
    """Sum of the terms with frequency in the closed window ``[a, b]``."""
    fa, fb = _as_frequency(a), _as_frequency(b)
    if fb < fa:
        raise ValueError("window requires a <= b")
    return evaluate(restrict(P, fa, fb), x)


def restrict(P: TrigPoly, a, b) -> TrigPoly:
    """Terms with frequency in the closed window ``[a, b]``."""
    fa, fb = _as_frequency(a), _as_frequency(b)
    keys = list(zip(P.n.tolist(), P.off.tolist()))
    lo = bisect.bisect_left(keys, fa._key())
    hi = bisect.bisect_right(keys, fb._key())
    return TrigPoly(P.n[lo:hi], P.off[lo:hi], P.c[lo:hi], _trusted=True)


def contract(P: TrigPoly, l: int) -> TrigPoly:
    """``x -> P(l x)``: every frequency scaled by the positive integer ``l``."""
    l = int(l)
    if l < 1:
        raise ValueError("contraction factor must be a positive integer")
    if l == 1 or len(P) == 0:
        return P
    if (abs(int(P.n[0])) + 1) * l >= _INT_LIMIT or (abs(int(P.n[-1])) + 1) * l >= _INT_LIMIT:
        raise OverflowError("contracted frequency exceeds the integer range")
    n, off = _canonical(P.n * l, P.off * l)
    return TrigPoly(n, off, P.c)


def _cmul(a, b):
    """Complex product from separate real operations, so that array and
    scalar products round identically (no fused multiply-add)."""
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    re = a.real * b.real - a.imag * b.imag
    im = a.real * b.imag + a.imag * b.real
    return re + 1j * im


def _pairwise(P: TrigPoly, Q: TrigPoly):
    lim = max(abs(int(P.n[0])), abs(int(P.n[-1]))) + max(abs(int(Q.n[0])), abs(int(Q.n[-1]))) + 2
    if lim >= _INT_LIMIT:
        raise OverflowError("product frequency exceeds the integer range")
    n = (P.n[:, None] + Q.n[None, :]).ravel()
    off = (P.off[:, None] + Q.off[None, :]).ravel()
    c = _cmul(P.c[:, None], Q.c[None, :]).ravel()
    return n, off, c


def multiply(P: TrigPoly, Q: TrigPoly) -> TrigPoly:
    """Product of exponential sums; equal frequencies (exact pair equality)
    merge by coefficient addition."""
    if len(P) == 0 or len(Q) == 0:
        return TrigPoly.empty()
    return TrigPoly(*_pairwise(P, Q))


def add(P: TrigPoly, Q: TrigPoly) -> TrigPoly:
    return TrigPoly(np.concatenate([P.n, Q.n]), np.concatenate([P.off, Q.off]),
                    np.concatenate([P.c, Q.c]))


# ---------------------------------------------------------------- special products

@dataclass(frozen=True)
class BlockProduct:
    """``H = Q_[l] P`` with integer-spectrum ``Q`` and ``l > 2 deg P``.

    Every frequency of ``product`` is uniquely ``j*l + mu`` with ``j`` in
    spec Q and ``mu`` in spec P; blocks for different ``j`` are disjoint.
    """

    base: TrigPoly
    modulator: TrigPoly
    scale: int
    product: TrigPoly

    def block_index(self, freq) -> tuple[int, Frequency]:
        """Split a product frequency into ``(j, mu)``."""
        f = _as_frequency(freq)
        j = round(Fraction(f.integer_part) / self.scale + Fraction(f.offset) / self.scale)
        return j, Frequency(f.integer_part - j * self.scale, f.offset)

    def norm1_blockwise(self) -> Fraction:
        """``||H^||_1`` summed block by block in exact rational arithmetic.

        Each product coefficient is split back into its factors, checked to be
        the float product of the two, and contributes ``|Q(j)| |P(mu)|``.
        """
        qa, pa = np.abs(self.modulator.c), np.abs(self.base.c)
        total = Fraction(0)
        for freq, c in self.product:
            j, mu = self.block_index(freq)
            iq = _locate(self.modulator.n, self.modulator.off, j, 0.0)
            ip = _locate(self.base.n, self.base.off, mu.integer_part, mu.offset)
            if iq < 0 or ip < 0 or complex(_cmul(self.modulator.c[iq], self.base.c[ip])) != c:
                raise AssertionError(f"coefficient at {freq} does not factor")
            total += Fraction(float(qa[iq])) * Fraction(float(pa[ip]))
        return total

    def norm1_factored(self) -> Fraction:
        """``||Q^||_1 * ||P^||_1`` from the same float moduli, exactly."""
        qa = sum(Fraction(float(v)) for v in np.abs(self.modulator.c))
        pa = sum(Fraction(float(v)) for v in np.abs(self.base.c))
        return qa * pa

    def majorant_bound(self, x, q_star_sup: float | None = None) -> np.ndarray:
        """Right side of ``H*(x) <= |P(x)| sup Q* + 2 P*(x) ||Q^||_inf``."""
        if q_star_sup is None:
            q_star_sup = sup_majorant(self.modulator)[1]
        _, q_inf, _ = coeff_norms(self.modulator)
        return (np.abs(evaluate(self.base, x)) * q_star_sup
                + 2.0 * majorant(self.base, x) * q_inf)


def special_product(Q: TrigPoly, P: TrigPoly, l: int) -> BlockProduct:
    """``Q(l x) P(x)`` with its block structure checked.

    Raises :class:`PreconditionError` unless ``Q`` has integer spectrum and
    ``l > 2 deg P``.
    """
    l = int(l)
    if not Q.is_integer_spectrum():
        raise PreconditionError("modulator must have integer spectrum")
    if l < 1 or not l > 2 * P.degree():
        raise PreconditionError(f"scale {l} must exceed 2 deg P = {2 * P.degree()}")
    if len(Q) == 0 or len(P) == 0:
        return BlockProduct(P, Q, l, TrigPoly.empty())
    Ql = contract(Q, l)
    n, off, c = _pairwise(Ql, P)
    n, off = _canonical(n, off)
    order = np.lexsort((off, n))
    n, off, c = n[order], off[order], c[order]
    if len(n) > 1 and np.any((n[1:] == n[:-1]) & (off[1:] == off[:-1])):
        raise AssertionError("block collision in special product")
    # rows of the outer product are already block-ordered because l > 2 deg P
    if not np.array_equal(order, np.arange(len(order))):
        raise AssertionError("blocks are not disjoint intervals")
    keep = c != 0
    H = TrigPoly(n[keep], off[keep], c[keep], _trusted=True)
    return BlockProduct(P, Q, l, H)


def sup_majorant(Q: TrigPoly, points_log2: int | None = None) -> tuple[float, float]:
    """``sup_{[-pi, pi]} Q*`` for integer-spectrum ``Q``.

    Returns ``(grid_max, upper_bound)``: the maximum over a periodic grid and
    that maximum plus ``L h / 2`` where ``L = sum |j| |Q(j)|`` bounds the
    Lipschitz constant of every windowed sum.
    """
    if not Q.is_integer_spectrum():
        raise PreconditionError("periodic sup needs integer spectrum")
    if len(Q) == 0:
        return 0.0, 0.0
    if points_log2 is None:
        points_log2 = max(10, math.ceil(math.log2(16 * (Q.degree() + 1))))
    g = Grid.periodic(points_log2)
    vals = majorant(Q, g)
    top = float(vals[:-1].max())
    lip = math.fsum(np.abs(Q.n.astype(float)) * np.abs(Q.c))
    return top, top + lip * g.step / 2


def exponential_matrix(freqs, x) -> np.ndarray:
    """Columns ``exp(i lambda_k x_j)`` for strictly increasing frequencies,
    with the same exact phase handling as :func:`evaluate`."""
    fs = [_as_frequency(f) for f in freqs]
    if any(not a < b for a, b in zip(fs, fs[1:])):
        raise ValueError("frequencies must be strictly increasing")
    U = TrigPoly([f.integer_part for f in fs], [f.offset for f in fs],
                 np.ones(len(fs), dtype=complex), _trusted=True)
    pts = x if isinstance(x, Grid) else np.atleast_1d(np.asarray(x, dtype=float))
    m = _points_count(pts)
    out = np.empty((m, len(fs)), dtype=complex)
    for rows in _row_chunks(m, max(1, len(fs))):
        out[rows] = _terms_matrix(U, pts, rows)
    return out
