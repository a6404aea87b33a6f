"""Fitting in measure with the shifted system ``exp(i (q + sigma(q)) x)``.

Regularized least squares on a grid, followed by a few reweighting rounds
that shrink the weight of points already well inside the threshold, so the
remaining error concentrates on a small set. The degree grows geometrically
until the exceedance measure drops below the budget.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .errors import AlgorithmFailure
from .grid import GridFunction, grid_measure
from .spectrum import ShiftProfile
from .trigpoly import Frequency, TrigPoly, evaluate, exponential_matrix


@dataclass
class FitReport:
    degree_used: int
    bad_measure: float
    good_sup: float
    residual_l2: float
    threshold: float
    budget: float
    met: bool
    regularization: float
    norm1: float
    trace: list = field(default_factory=list)   # accepted (D, bad_measure) pairs

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


@dataclass(frozen=True)
class FitConfig:
    D_start: int = 4
    growth: float = 1.5
    rounds: int = 5
    down_weight: float = 0.1
    reg_per_point: float = 1e-10


def residual(target: GridFunction, S: TrigPoly) -> GridFunction:
    """``target - S`` at the grid nodes."""
    if len(S) == 0:
        return GridFunction(target.grid, target.samples.copy())
    return GridFunction(target.grid, target.samples - evaluate(S, target.grid))


def shifted_frequencies(D: int, profile: ShiftProfile) -> list[Frequency]:
    """Distinct ``q + sigma(q)``, ``|q| <= D``, ascending. A profile whose
    shifted values collide contributes each value once."""
    fs = sorted({profile.frequency(q) for q in range(-D, D + 1)})
    return fs


def measure_report(target: GridFunction, F: TrigPoly, eta: float, mu: float,
                   degree: int, reg: float) -> FitReport:
    """Independent pass: evaluate ``F`` afresh and count exceedances."""
    err = np.abs(residual(target, F).samples)
    h = target.grid.step
    bad = err > eta
    good = err[~bad]
    bm = grid_measure(bad, target.grid)
    return FitReport(degree_used=degree, bad_measure=bm,
                     good_sup=float(good.max()) if good.size else 0.0,
                     residual_l2=float(math.sqrt(h * np.sum(err ** 2))),
                     threshold=eta, budget=mu, met=bm < mu, regularization=reg,
                     norm1=math.fsum(np.abs(F.c)))


def _solve(X, y, w, reg):
    Xw = X * w[:, None]
    A = X.conj().T @ Xw
    A[np.diag_indices_from(A)] += reg
    return linalg.solve(A, X.conj().T @ (w * y), assume_a="her")


def fit_in_measure(target: GridFunction, eta: float, mu: float, profile: ShiftProfile,
                   D_max: int, config: FitConfig = FitConfig(),
                   strict: bool = False) -> tuple[TrigPoly, FitReport]:
    """Fit ``F`` with spec in ``{q + sigma(q) : |q| <= D}``, ``D <= D_max``,
    aiming for grid measure of ``{|F - target| > eta}`` below ``mu``.

    Returns the first fit meeting the budget, otherwise the best one with
    ``report.met`` false; ``strict`` turns the latter into
    :class:`AlgorithmFailure` carrying ``(F, report)``.
    """
    if not (eta > 0 and mu > 0):
        raise ValueError("threshold and budget must be positive")
    y = target.samples
    if not np.all(np.isfinite(y)):
        raise ValueError("target has non-finite samples")
    reg = config.reg_per_point * target.grid.count
    if not np.any(y):
        rep = measure_report(target, TrigPoly.empty(), eta, mu, 0, reg)
        rep.trace = [(0, rep.bad_measure)]
        return TrigPoly.empty(), rep

    best_F, best = None, None
    trace = []
    D = max(0, min(config.D_start, D_max))
    while True:
        fs = shifted_frequencies(D, profile)
        X = exponential_matrix(fs, target.grid)
        w = np.ones(len(y))
        for _ in range(config.rounds + 1):
            c = _solve(X, y, w, reg)
            F = TrigPoly([f.integer_part for f in fs], [f.offset for f in fs], c)
            rep = measure_report(target, F, eta, mu, D, reg)
            if best is None or rep.bad_measure < best.bad_measure:
                best_F, best = F, rep
                trace.append((D, rep.bad_measure))
            if rep.met:
                break
            err = np.abs(X @ c - y)
            w = np.where(err < eta / 2, config.down_weight, 1.0)
        if best.met or D >= D_max:
            break
        D = min(D_max, max(D + 1, math.ceil(D * config.growth)))
    best.trace = trace
    if strict and not best.met:
        raise AlgorithmFailure("fit budget unmet at D_max",
                               {"poly": best_F.to_records(), "report": best.to_dict()})
    return best_F, best
