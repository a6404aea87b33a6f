"""Diagnostics over completed representations and the smoothing obstruction.

Everything here reads state; nothing mutates it.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .grid import Grid, GridFunction, grid_measure, sign_changes
from .representer import (RepresentationState, StageRecord, block_values, diag_grid_for,
                          evaluate_S, stage_grid_for)
from .trigpoly import BlockProduct, Frequency, _as_frequency, majorant, sup_majorant


# ---------------------------------------------------------------- measures

@dataclass(frozen=True)
class Exceedance:
    measure: float
    uncertainty: float          # grid step times sign changes of |g - h| - threshold
    length: float               # 2L

    def __float__(self):
        return self.measure


def measure_exceedance(g: GridFunction, h: GridFunction, threshold: float) -> Exceedance:
    """Grid measure of ``{|g - h| > threshold}`` with a sign-change error bar."""
    if g.grid.key() != h.grid.key():
        raise ValueError("grid mismatch")
    excess = np.abs(g.samples - h.samples) - threshold
    return Exceedance(grid_measure(excess > 0, g.grid),
                      g.grid.step * sign_changes(excess),
                      2 * g.grid.half_length)


# ---------------------------------------------------------------- special products

def check_special_product_bound(B: BlockProduct, grid, q_star_sup: float | None = None) -> float:
    """``min_x (|P(x)| sup Q* + 2 P*(x) ||Q^||_inf - H*(x))`` over the points.

    ``sup Q*`` defaults to the certified upper bound from a fine periodic grid
    (grid maximum plus a Lipschitz allowance), computed once.
    """
    if len(B.product) == 0:
        return 0.0
    if q_star_sup is None:
        q_star_sup = sup_majorant(B.modulator)[1]
    rhs = B.majorant_bound(grid, q_star_sup)
    lhs = majorant(B.product, grid)
    return float(np.min(rhs - lhs))


# ---------------------------------------------------------------- symmetric partial sums

def block_range(st: StageRecord) -> tuple[Fraction, Fraction]:
    """Smallest and largest ``|lambda|`` in the block, exactly."""
    vals = [abs(Fraction(int(n)) + Fraction(float(o))) for n, o in
            ((st.A.n[0], st.A.off[0]), (st.A.n[-1], st.A.off[-1]))]
    # blocks are symmetric in s, so the extreme moduli sit at the two ends or
    # around the gap between negative and positive s
    neg = st.A.n + st.A.off < 0
    i = int(np.count_nonzero(neg))
    inner = []
    if 0 < i < len(st.A):
        inner = [abs(Fraction(int(st.A.n[j])) + Fraction(float(st.A.off[j]))) for j in (i - 1, i)]
    every = vals + inner
    return min(every), max(every)


def _inside_cutoff(st: StageRecord, X: int) -> np.ndarray:
    """Mask of terms with ``|lambda| < X`` for an integer cutoff. The integer
    differences are exact; when they exceed 2**53 in size the offset cannot
    change the sign, so the float comparison is still exact."""
    n, off = st.A.n, st.A.off
    below = (n - X).astype(float) + off < 0
    above = (n + X).astype(float) + off > 0
    return below & above


@dataclass
class CutoffReport:
    cutoff: int
    kind: str                 # "between" (after block N) or "inside" (block N)
    N: int
    deviation: float          # sup |partial - S_N| (between) or |partial - S_{N-1}| (inside)
    deviation_next: float     # inside only: sup |partial - S_N|
    bound: float              # inside only: recorded majorant sup of A_N
    ok: bool


def symmetric_convergence(state: RepresentationState, cutoffs) -> list[CutoffReport]:
    """Symmetric partial sums ``sum_{|lambda| < X} c e^{i lambda x}`` at each
    cutoff, compared with the stage sums on the majorant subgrid of the
    relevant stage."""
    blocks = [st for st in state.stages if not st.noop]
    ranges = [block_range(st) for st in blocks]
    out = []
    prev = None
    for X in cutoffs:
        X = int(X)
        if X <= 0 or (prev is not None and X <= prev):
            raise ValueError("cutoffs must be positive and increasing")
        prev = X
        full = [st for st, (lo, hi) in zip(blocks, ranges) if hi < X]
        part = [st for st, (lo, hi) in zip(blocks, ranges) if lo < X <= hi]
        if part:
            st = part[0]
            grid = diag_grid_for(state, st.N)
            base = evaluate_S(state, st.N - 1, grid).samples
            mask = _inside_cutoff(st, X)
            partial = base + block_values(st, grid, mask)
            full_N = base + block_values(st, grid)
            dev = float(np.abs(partial - base).max())
            dev_next = float(np.abs(partial - full_N).max())
            bound = float(st.diagnostics.get("A_majorant_sup", math.inf))
            out.append(CutoffReport(X, "inside", st.N, dev, dev_next, bound,
                                    dev <= bound and dev_next <= bound))
            continue
        N = max((st.N for st in full), default=0)
        ref = max(N, 1)
        grid = diag_grid_for(state, min(ref, state.completed) if state.completed else 1)
        S = evaluate_S(state, N, grid).samples if N else np.zeros(grid.count, dtype=complex)
        partial = np.zeros(grid.count, dtype=complex)
        for st in full:
            partial = partial + block_values(st, grid)
        dev = float(np.abs(partial - S).max())
        out.append(CutoffReport(X, "between", N, dev, 0.0, 0.0, dev == 0.0))
    return out


def default_cutoffs(state: RepresentationState, inside_per_block: int = 3) -> list[int]:
    """Integer cutoffs: one in each gap between blocks (and beyond the last),
    plus a few evenly spread inside each block."""
    cuts = []
    last = 0
    for st in (s for s in state.stages if not s.noop):
        lo, hi = block_range(st)
        gap = (Fraction(last) + lo) / 2 if last else lo / 2
        cuts.append(max(1, math.floor(gap)))
        for i in range(1, inside_per_block + 1):
            cuts.append(math.floor(lo + (hi - lo) * i / (inside_per_block + 1)))
        last = hi
    cuts.append(math.floor(last) + 1 if last else 1)
    return sorted(set(c for c in cuts if c > 0))


# ---------------------------------------------------------------- convergence trace

@dataclass
class ConvergenceTrace:
    rows: list = field(default_factory=list)   # dicts: N, bad_measure_RN, A_majorant_sup, sym_sup_dev

    COLUMNS = ("N", "bad_measure_RN", "A_majorant_sup", "sym_sup_dev")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r["N"]] + [repr(float(r[c])) for c in self.COLUMNS[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceTrace":
        rows = []
        for r in csv.DictReader(io.StringIO(text)):
            rows.append({"N": int(r["N"]), **{c: float(r[c]) for c in cls.COLUMNS[1:]}})
        return cls(rows)

    def monotonicity(self) -> dict:
        bad = [r["bad_measure_RN"] for r in self.rows]
        maj = [r["A_majorant_sup"] for r in self.rows]
        return {"bad_measure_strictly_decreasing": all(b < a for a, b in zip(bad, bad[1:])),
                "majorant_decreasing_from_2": all(b < a for a, b in zip(maj[1:], maj[2:]))}


def stage_residual(state: RepresentationState, N: int) -> tuple[Grid, GridFunction]:
    grid = stage_grid_for(state, N)
    return grid, state.target.on(grid) - evaluate_S(state, N - 1, grid)


def recompute_stage(state: RepresentationState, st: StageRecord) -> dict:
    """Fresh measurement of the per-stage convergence quantities."""
    grid, R = stage_residual(state, st.N)
    if st.noop:
        thr = st.params.eta
        ex = measure_exceedance(R, GridFunction.zeros(grid), thr)
        return {"bad_measure_RN": ex.measure, "uncertainty": ex.uncertainty,
                "A_majorant_sup": 0.0}
    thr = st.diagnostics["threshold_RN"]
    A = GridFunction(grid, block_values(st, grid))
    ex = measure_exceedance(R, A, thr)
    maj = float(majorant(st.A, diag_grid_for(state, st.N)).max())
    return {"bad_measure_RN": ex.measure, "uncertainty": ex.uncertainty,
            "A_majorant_sup": maj}


def convergence_trace(state: RepresentationState, recompute: bool = True) -> ConvergenceTrace:
    """One row per completed stage; ``sym_sup_dev`` is the largest deviation
    of between-block symmetric partial sums from ``S_N`` up to that stage."""
    reports = symmetric_convergence(state, default_cutoffs(state, inside_per_block=0))
    rows = []
    for st in state.stages:
        vals = recompute_stage(state, st) if recompute else st.diagnostics
        dev = max((r.deviation for r in reports if r.kind == "between" and r.N <= st.N),
                  default=0.0)
        rows.append({"N": st.N, "bad_measure_RN": vals["bad_measure_RN"],
                     "A_majorant_sup": vals["A_majorant_sup"], "sym_sup_dev": dev})
    return ConvergenceTrace(rows)


# ---------------------------------------------------------------- the obstruction

def delta_multiplier(freq, k: int) -> complex:
    """``(1 - exp(-2 pi i lambda))**k``; only the offset of ``lambda`` matters."""
    f: Frequency = _as_frequency(freq)
    t = f.offset
    base = complex(2j * math.sin(math.pi * t) * complex(math.cos(math.pi * t),
                                                          -math.sin(math.pi * t)))
    return base ** int(k)


def minimal_smoothing_order(beta: float, alpha: float) -> int:
    """Smallest integer ``k`` with ``alpha k > beta + 1``, in exact arithmetic."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    ratio = (Fraction(beta) + 1) / Fraction(alpha)
    return max(0, math.floor(ratio) + 1)


def _terms(n, beta, alpha, k, c):
    n = np.asarray(n, dtype=float)
    return n ** beta * (2 * np.abs(np.sin(math.pi * c * n ** (-alpha)))) ** k


def tail_bound(beta, alpha, k, c=1.0, n0=1000, n1=None) -> float:
    """Upper bound for ``sum_{n0 <= n <= n1} n**beta (2 sin(pi c n**-alpha))**k``
    from ``sin t <= t`` and an integral comparison; ``n1=None`` means infinity."""
    p = alpha * k - beta
    if p <= 1 and n1 is None:
        return math.inf
    lead = (2 * math.pi * c) ** k
    if p == 1:
        integral = math.log(n1 / n0)
    else:
        far = 0.0 if n1 is None else n1 ** (1 - p)
        integral = (n0 ** (1 - p) - far) / (p - 1)
    return lead * (n0 ** (-p) + integral)


def brute_sum(beta, alpha, k, c=1.0, n0=1000, n1=10 ** 6) -> float:
    return math.fsum(_terms(np.arange(n0, n1 + 1), beta, alpha, k, c))


@dataclass
class ObstructionReport:
    alpha: float
    beta: float
    c: float
    k: int
    minimal_k: int
    converges: bool
    tail_from: int
    tail_bound: float
    tail_bound_finite: float
    brute_force: float
    relative_gap: float
    table: list = field(default_factory=list)    # (k, converges, |multiplier| at n = tail_from)

    def to_dict(self):
        return asdict(self)


def smoothing_obstruction(beta: float, alpha: float, k: int | None = None, c: float = 1.0,
                          k_max: int = 12, n0: int = 1000, n1: int = 10 ** 6) -> ObstructionReport:
    """Summability of ``n**beta |Delta^k multiplier|`` on ``n + c n**-alpha``.

    The series converges iff ``alpha k > beta + 1``; then ``Delta^k`` sends
    every series with ``|c_n| <= n**beta`` on this spectrum to an absolutely
    convergent one.
    """
    kmin = minimal_smoothing_order(beta, alpha)
    k = kmin if k is None else int(k)
    conv = alpha * k > beta + 1
    bound = tail_bound(beta, alpha, k, c, n0)
    finite = tail_bound(beta, alpha, k, c, n0, n1)
    brute = brute_sum(beta, alpha, k, c, n0, n1)
    gap = abs(finite - brute) / brute if brute else math.inf
    table = []
    for kk in range(1, k_max + 1):
        mult = abs(delta_multiplier(Frequency(n0, c * n0 ** (-alpha)), kk))
        table.append((kk, bool(alpha * kk > beta + 1), mult))
    return ObstructionReport(alpha, beta, c, k, kmin, bool(conv), n0, bound, finite,
                             brute, gap, table)
