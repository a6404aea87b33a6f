"""Correction polynomials: integer spectrum, zero mean, small coefficients,
close to 1 away from a small exceptional set, bounded partial-sum majorant.

Two builders are provided and neither is trusted: every result is re-measured
by :func:`verify_correction` on an independent grid.

``analytic``
    ``P = 1 - G`` with ``G = (1/R) sum_r K(x - x_r)`` a mean-one average of
    translates of a Gaussian-windowed kernel ``K``. ``P^(j) = -K^(j) mu^(j)``
    where ``mu`` is the empirical measure of the centres, so spreading the
    centres to make ``|K^ mu^|`` uniformly small controls the coefficients,
    and the kernel width controls the exceptional measure (about ``R`` times
    the bump width).

``minimax``
    Cosine polynomial of degree ``n`` from a linear program: keep
    ``|P - 1| <= delta`` off an exceptional union of intervals, coefficients in
    a box, and minimize a sup bound on ``P*`` enforced by window cuts; the
    exceptional set is reassigned between solves.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, sparse

from .errors import AlgorithmFailure, PreconditionError
from .grid import Grid, sign_changes
from .trigpoly import TrigPoly, evaluate, majorant

TWO_PI = 2 * math.pi
_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass
class Certificate:
    zero_coefficient: float
    coeff_inf: float
    bad_measure: float
    bad_measure_uncertainty: float
    majorant_sup: float
    C_achieved: float
    grid_step: float
    grid_points: int
    degree: int
    terms: int

    def holds(self, eps: float, delta: float) -> bool:
        return (self.zero_coefficient == 0 and self.coeff_inf < delta
                and self.bad_measure < eps)

    def to_dict(self):
        return asdict(self)


@dataclass
class CorrectionPoly:
    poly: TrigPoly
    target_eps: float
    target_delta: float
    certificate: Certificate
    strategy: str
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"poly": self.poly.to_records(), "target_eps": self.target_eps,
                "target_delta": self.target_delta, "strategy": self.strategy,
                "params": self.params, "certificate": self.certificate.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d) -> "CorrectionPoly":
        return cls(TrigPoly.from_records(d["poly"]), d["target_eps"], d["target_delta"],
                   Certificate(**d["certificate"]), d["strategy"], d.get("params", {}))


# ---------------------------------------------------------------- verification

def verification_grid(degree: float, oversample: int) -> Grid:
    need = max(8, oversample * (2 * int(math.ceil(degree)) + 1))
    return Grid.periodic(max(3, math.ceil(math.log2(need))))


def verify_correction(P: TrigPoly, eps: float, delta: float,
                      oversample: int = 4) -> Certificate:
    """Re-measure every certificate field on a periodic grid of at least
    ``oversample * (2 deg P + 1)`` nodes in ``[-pi, pi)``."""
    if not P.is_integer_spectrum():
        raise ValueError("correction polynomials need integer spectrum")
    g = verification_grid(P.degree(), oversample)
    m = g.count - 1                      # drop x = pi, it repeats x = -pi
    h = TWO_PI / m
    vals = evaluate(P, g)[:m] if len(P) else np.zeros(m, dtype=complex)
    excess = np.abs(vals - 1.0) - delta
    bad = h * int(np.count_nonzero(excess > 0))
    unc = h * sign_changes(excess, cyclic=True)
    maj = float(majorant(P, g)[:m].max()) if len(P) else 0.0
    a = np.abs(P.c)
    nonzero = P.n != 0
    return Certificate(
        zero_coefficient=float(abs(P.coefficient(0))),
        coeff_inf=float(a[nonzero].max()) if nonzero.any() else 0.0,
        bad_measure=bad, bad_measure_uncertainty=unc,
        majorant_sup=maj, C_achieved=maj * eps, grid_step=h, grid_points=m,
        degree=int(P.degree()), terms=len(P))


# ---------------------------------------------------------------- analytic

def _window(d: int, sigma: float) -> np.ndarray:
    j = np.arange(1, d + 1)
    return np.exp(-j ** 2 / (2 * sigma ** 2))


def _powers(x: np.ndarray, J: int) -> np.ndarray:
    """``exp(-i j x_r)`` for ``j = 1..J`` by repeated multiplication, reseeded
    every 256 rows to bound drift."""
    base = np.exp(-1j * x)
    out = np.empty((J, len(x)), dtype=complex)
    for start in range(0, J, 256):
        stop = min(J, start + 256)
        out[start] = np.exp(-1j * (start + 1) * x)
        if stop - start > 1:
            out[start + 1:stop] = base
            np.cumprod(out[start:stop], axis=0, out=out[start:stop])
    return out


def _spread(R: int, phi: np.ndarray, active: int, maxiter: int) -> np.ndarray:
    """Centres making ``max_j |phi_j mu^(j)|`` small: L-BFGS on a growing
    power mean of the moduli over the ``active`` lowest frequencies."""
    j = np.arange(1, active + 1, dtype=float)
    ph = phi[:active]
    x = math.pi * (2 * ((np.arange(R) * _GOLDEN) % 1.0) - 1)

    def coeffs(x):
        E = _powers(x, active)
        return E, ph * E.mean(axis=1)

    def f(x, p, M0):
        E, c = coeffs(x)
        a = np.abs(c)
        w = p * a ** (p - 2) / M0 ** p
        dc = (ph * (-1j * j))[:, None] * E / R
        grad = (w[:, None] * np.real(np.conj(c)[:, None] * dc)).sum(axis=0)
        return float(np.sum((a / M0) ** p)), grad

    for p in (4, 8, 16, 32, 64, 128):
        M0 = np.abs(coeffs(x)[1]).max()
        res = optimize.minimize(f, x, args=(p, M0), jac=True, method="L-BFGS-B",
                                options={"maxiter": maxiter})
        x = res.x
    return np.sort((x + math.pi) % TWO_PI - math.pi)


def _fft_values(coef: np.ndarray, m: int) -> np.ndarray:
    """Real polynomial ``2 Re sum_{j>=1} coef_j e^{ijx}`` at ``2 pi k / m``."""
    spec = np.zeros(m, dtype=complex)
    spec[1:len(coef) + 1] = coef
    return 2 * np.real(np.fft.ifft(spec) * m)


@dataclass(frozen=True)
class AnalyticConfig:
    spread_const: float = 1.75     # initial R = (spread_const / delta)^2
    width_factor: float = 3.5      # degree = width_factor * sigma
    active_cut: float = 0.2        # optimize frequencies with phi above this
    maxiter: int = 150
    attempts: int = 8
    probe_oversample: int = 8


def _calibrate(x, sigma, et, dt, cfg, degree_budget):
    """Grow ``sigma`` until the probed exceptional measure is below ``et``."""
    for _ in range(40):
        d = math.ceil(cfg.width_factor * sigma)
        if degree_budget is not None and d > degree_budget:
            return None
        coef = _window(d, sigma) * _powers(x, d).mean(axis=1)
        m = 1 << math.ceil(math.log2(cfg.probe_oversample * (2 * d + 1)))
        bad = TWO_PI * np.count_nonzero(np.abs(1.0 + _fft_values(coef, m)) > dt) / m
        if bad < et:
            return sigma, coef, bad
        sigma *= max(1.03, 1.02 * bad / et)
    return None


def _analytic(eps, delta, degree_budget, margin, cfg: AnalyticConfig):
    dt, et = delta * (1 - margin), eps * (1 - margin)
    R = max(2, math.ceil((cfg.spread_const / dt) ** 2))
    best = None
    for _ in range(cfg.attempts):
        golden = math.pi * (2 * ((np.arange(R) * _GOLDEN) % 1.0) - 1)
        sigma0 = R * math.sqrt(2 * math.log(max(math.e, math.sqrt(TWO_PI) / dt))) / et
        cal = _calibrate(golden, sigma0, et, dt, cfg, degree_budget)
        if cal is None:
            break
        sigma = cal[0]
        d = math.ceil(cfg.width_factor * sigma)
        phi = _window(d, sigma)
        active = max(1, int(np.count_nonzero(phi >= cfg.active_cut)))
        x = _spread(R, phi, active, cfg.maxiter)
        cal = _calibrate(x, sigma, et, dt, cfg, degree_budget)
        if cal is None:
            break
        sigma, coef, bad = cal
        d = len(coef)
        cmax = float(np.abs(coef).max())
        best = {"R": R, "sigma": sigma, "degree": d, "coeff_max": cmax, "bad_probe": bad}
        if cmax >= dt:
            R = math.ceil(R * 1.1 * (cmax / dt) ** 2)
            continue
        j = np.arange(1, d + 1)
        P = TrigPoly(np.r_[-j[::-1], j], np.zeros(2 * d), np.r_[-np.conj(coef[::-1]), -coef])
        return P, best
    raise AlgorithmFailure("analytic construction did not meet the targets",
                           {"best": best, "degree_budget": degree_budget})


# ---------------------------------------------------------------- minimax

@dataclass(frozen=True)
class MinimaxConfig:
    grid_factor: int = 4           # constraint points on (0, pi) per unit degree
    pieces: int | None = None      # exceptional intervals on (0, pi); default ~ (1.5/delta)^2 / 2
    rounds: int = 6
    cut_rounds: int = 3
    cut_points: int = 64


def _cos_matrix(x, n):
    return 2 * np.cos(np.outer(x, np.arange(1, n + 1)))


def _minimax(eps, delta, n, margin, cfg: MinimaxConfig):
    """Even cosine polynomial ``P = sum_j a_j 2 cos(jx)`` from alternating
    exceptional-set assignment and linear programs."""
    dt, et = delta * (1 - margin), eps * (1 - margin)
    m = cfg.grid_factor * n
    h = math.pi / m
    x = (np.arange(m) + 0.5) * h                 # symmetric half grid
    C = _cos_matrix(x, n)
    budget = int(et / 2 / h)                     # points allowed in E on (0, pi)
    if budget < 1:
        raise AlgorithmFailure("exceptional budget below one grid cell",
                               {"n": n, "budget_points": budget})
    pieces = cfg.pieces or max(1, min(budget, math.ceil((1.5 / dt) ** 2 / 2)))
    per = max(1, budget // pieces)
    E = np.zeros(m, dtype=bool)
    for r in range(pieces):
        c0 = int(((r + 0.5) * _GOLDEN % 1.0) * m)
        E[c0:min(m, c0 + per)] = True
    best = None
    a = np.zeros(n)
    for rnd in range(cfg.rounds):
        keep = ~E
        res = _soft_lp(C[keep], dt, n)
        if res is None:
            break
        a, viol = res
        P = C @ a
        info = {"round": rnd, "violation_l1": float(viol.sum()), "E_points": int(E.sum())}
        best = info
        if viol.max() <= 0:
            a = _cut_lp(C, E, dt, n, a, cfg)
            return a, info
        # free cells in E that are already good; spend the budget on the worst
        s = np.zeros(m)
        s[keep] = viol
        E &= ~(np.abs(P - 1) <= dt)
        room = budget - int(E.sum())
        worst = np.argsort(-s, kind="stable")[:max(0, room)]
        E[worst[s[worst] > 0]] = True
    raise AlgorithmFailure("minimax LP infeasible at this degree", {"best": best, "n": n})


def _soft_lp(Ck, dt, n):
    """Minimize total violation of ``|P - 1| <= dt`` on the kept points."""
    mk = Ck.shape[0]
    A = sparse.bmat([[sparse.csr_matrix(Ck), -sparse.eye(mk)],
                     [sparse.csr_matrix(-Ck), -sparse.eye(mk)]]).tocsr()
    b = np.r_[np.full(mk, 1 + dt), np.full(mk, -1 + dt)]
    cost = np.r_[np.zeros(n), np.ones(mk)]
    res = optimize.linprog(cost, A_ub=A, b_ub=b, bounds=[(-dt, dt)] * n + [(0, None)] * mk,
                           method="highs")
    if res.status != 0:
        return None
    return res.x[:n], np.maximum(res.x[n:], 0)


def _cut_lp(C, E, dt, n, a0, cfg):
    """With the exceptional set fixed and feasibility known, minimize ``t``
    subject to ``t >= <window sum, u>`` for the current worst windows."""
    keep = ~E
    Ck = C[keep]
    mk = Ck.shape[0]
    x_all = (np.arange(C.shape[0]) + 0.5) * math.pi / C.shape[0]
    cuts = []
    a = a0
    for _ in range(cfg.cut_rounds):
        P = _cos_poly(a)
        vals, ia, ib = majorant(P, x_all, return_windows=True)
        top = np.argsort(-vals, kind="stable")[:cfg.cut_points]
        for r in top:
            freqs = P.n[ia[r]:ib[r]]
            w = np.exp(1j * freqs * x_all[r])
            s = np.sum(P.c[ia[r]:ib[r]] * w)
            u = s / abs(s) if s != 0 else 1.0
            row = np.zeros(n)
            # window sum is linear in a: coefficient of a_|f| is e^{i f x}
            np.add.at(row, np.abs(freqs) - 1, np.real(np.conj(u) * w))
            cuts.append(row)
        K = np.array(cuts)
        A = sparse.vstack([
            sparse.hstack([sparse.csr_matrix(Ck), sparse.csr_matrix((mk, 1))]),
            sparse.hstack([sparse.csr_matrix(-Ck), sparse.csr_matrix((mk, 1))]),
            sparse.hstack([sparse.csr_matrix(K), -np.ones((len(K), 1))]),
        ]).tocsr()
        b = np.r_[np.full(mk, 1 + dt), np.full(mk, -1 + dt), np.zeros(len(K))]
        cost = np.r_[np.zeros(n), 1.0]
        res = optimize.linprog(cost, A_ub=A, b_ub=b, bounds=[(-dt, dt)] * n + [(0, None)],
                               method="highs")
        if res.status != 0:
            break
        a = res.x[:n]
    return a


def _cos_poly(a: np.ndarray) -> TrigPoly:
    j = np.arange(1, len(a) + 1)
    return TrigPoly(np.r_[-j[::-1], j], np.zeros(2 * len(a)), np.r_[a[::-1], a])


# ---------------------------------------------------------------- entry point

def build_correction(eps: float, delta: float, strategy: str = "analytic",
                     degree_budget: int | None = None, margin: float = 0.05,
                     oversample: int = 4, analytic: AnalyticConfig = AnalyticConfig(),
                     minimax: MinimaxConfig = MinimaxConfig()) -> CorrectionPoly:
    """Build and certify a correction polynomial for ``(eps, delta)``.

    ``eps >= 2 pi`` returns the zero polynomial. Raises
    :class:`AlgorithmFailure` (with the best certificate or diagnostics in
    ``details``) when the targets are not met.
    """
    if not (eps > 0 and 0 < delta < 1):
        raise PreconditionError("need eps > 0 and 0 < delta < 1")
    params = {"eps": eps, "delta": delta, "strategy": strategy,
              "degree_budget": degree_budget, "margin": margin, "oversample": oversample}
    if eps >= TWO_PI:
        P = TrigPoly.empty()
        cert = verify_correction(P, eps, delta, oversample)
        return CorrectionPoly(P, eps, delta, cert, "trivial", params)
    if strategy == "analytic":
        P, info = _analytic(eps, delta, degree_budget, margin, analytic)
    elif strategy == "minimax":
        if degree_budget is None:
            raise PreconditionError("minimax needs a degree budget")
        a, info = _minimax(eps, delta, int(degree_budget), margin, minimax)
        P = _cos_poly(a)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    cert = verify_correction(P, eps, delta, oversample)
    params["build"] = info
    out = CorrectionPoly(P, eps, delta, cert, strategy, params)
    if not cert.holds(eps, delta):
        raise AlgorithmFailure("built polynomial failed verification",
                               {"certificate": cert.to_dict(), "build": info})
    return out
