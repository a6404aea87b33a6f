"""Stage-by-stage construction of a representation ``f ~ sum c(n) exp(i lambda(n) x)``.

Stage ``N`` works on ``[-N pi, N pi]``: fit the residual with shifted
frequencies ``q + sigma(q)``, build a correction polynomial ``Q``, plant a
block witness ``(k, l)``, form ``H = F * Q(l x)`` and move every frequency
``s l + q + sigma(q)`` of ``H`` onto ``lambda(s l + q)``. The moved polynomial
is the block ``A_N``.

Blocks are evaluated on dyadic grids through their product structure:
``l x`` lands exactly on the nodes of a periodic grid, so the sum over ``s`` is
one FFT per ``q``, and the small moves ``u = r(n) - sigma(q)`` enter through a
short Taylor series in ``u x`` whose truncation error is bounded and recorded.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .approximator import FitConfig, FitReport, fit_in_measure
from .correction import CorrectionPoly, build_correction
from .errors import AlgorithmFailure, PreconditionError
from .grid import Grid, GridFunction, grid_measure, stage_grid
from .spectrum import (DEFAULT_PROFILE, BlockWitness, PerturbedSpectrum, ShiftProfile,
                       plant_witness, scan_l)
from .trigpoly import (BlockProduct, TrigPoly, _cmul, coeff_norms, evaluate,
                       exponential_matrix, majorant, special_product)

_INT_LIMIT = 1 << 62
_TAYLOR_REL = 2.0 ** -60


# ---------------------------------------------------------------- schedules

@dataclass(frozen=True)
class Schedule:
    """Stage targets. ``eta_N = eta0 / N**eta_power`` and similarly for ``mu``
    and ``eps``; ``delta_N = delta0 / (N**delta_power ||F^||_1)`` clipped to
    ``[delta_min, delta_max]``; ``D_max = D0 + D1 N``."""

    name: str = "desk"
    eta0: float = 0.25
    eta_power: float = 2.0
    mu0: float = 0.5
    mu_power: float = 1.0
    eps0: float = 0.5
    eps_power: float = 1.0
    delta0: float = 0.5
    delta_power: float = 1.0
    delta_min: float = 0.3
    delta_max: float = 0.4
    D0: int = 8
    D1: int = 4
    strict_fit: bool = False

    @classmethod
    def strict(cls, D0: int = 8, D1: int = 4) -> "Schedule":
        return cls(name="strict", eta0=1.0, eta_power=4.0, mu0=1.0, mu_power=2.0,
                   eps0=1.0, eps_power=3.0, delta0=1.0, delta_power=4.0,
                   delta_min=0.0, delta_max=0.5, D0=D0, D1=D1, strict_fit=True)

    @classmethod
    def named(cls, name: str) -> "Schedule":
        if name == "desk":
            return cls()
        if name == "strict":
            return cls.strict()
        raise ValueError(f"unknown schedule {name!r}")

    def eta(self, N):
        return self.eta0 / N ** self.eta_power

    def mu(self, N):
        return self.mu0 / N ** self.mu_power

    def eps(self, N):
        return self.eps0 / N ** self.eps_power

    def D_max(self, N):
        return self.D0 + self.D1 * N

    def delta(self, N, norm1):
        d = self.delta0 / (N ** self.delta_power * norm1)
        return min(self.delta_max, max(self.delta_min, d))


@dataclass(frozen=True)
class RepresenterConfig:
    schedule: Schedule = field(default_factory=Schedule)
    grid_log2: int = 14            # stage grid step pi / 2**grid_log2 (raised if the fit needs it)
    diag_log2: int = 5             # majorant subgrid step pi / 2**diag_log2
    witness_mode: str = "plant"    # or "scan" (small k only)
    scan_span: int = 10 ** 6
    jitter_fraction: float = 1.0   # planted jitter = fraction / k**2
    correction: str = "analytic"
    correction_budget: int | None = None
    correction_oversample: int = 1
    fit: FitConfig = field(default_factory=FitConfig)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "RepresenterConfig":
        d = dict(d)
        d["schedule"] = Schedule(**d.get("schedule", {}))
        d["fit"] = FitConfig(**d.get("fit", {}))
        return cls(**d)


# ---------------------------------------------------------------- targets

@dataclass(frozen=True)
class Target:
    """A target function on the real line, identified by a name for manifests."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    meta: dict = field(default_factory=dict, compare=False)

    def on(self, grid: Grid) -> GridFunction:
        return GridFunction.from_callable(grid, self.fn)

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"


def preset_target(name: str, profile: ShiftProfile = DEFAULT_PROFILE) -> Target:
    if name == "zero":
        return Target(name, lambda x: np.zeros(np.shape(x), dtype=complex))
    if name == "step":
        return Target(name, lambda x: ((x >= 0) & (x <= 1)).astype(complex))
    if name == "sawtooth":
        return Target(name, lambda x: (np.mod(x + np.pi, 2 * np.pi) - np.pi) / np.pi + 0j)
    if name == "single-exponential":
        f = profile.frequency(1)
        return Target(name, lambda x: evaluate(TrigPoly([f.integer_part], [f.offset], [1.0]), x),
                      {"frequency": f.value})
    raise ValueError(f"unknown target preset {name!r}")


def samples_target(gf: GridFunction, source: str = "samples") -> Target:
    """Linear interpolation of grid samples, zero outside the sampled range."""
    x, v = gf.x, gf.samples

    def fn(t):
        t = np.asarray(t, dtype=float)
        re = np.interp(t, x, v.real, left=0.0, right=0.0)
        im = np.interp(t, x, v.imag, left=0.0, right=0.0)
        return re + 1j * im

    return Target("samples", fn, {"source": source})


# ---------------------------------------------------------------- stage records

@dataclass(frozen=True)
class Parameters:
    N: int
    eta: float
    mu: float
    eps: float
    delta: float
    D_max: int
    k_min_constraints: dict      # name -> strict lower bound for k


@dataclass
class StageRecord:
    N: int
    F: TrigPoly
    params: Parameters
    Q: CorrectionPoly | None = None
    k: int = 0
    witness: BlockWitness | None = None
    H: BlockProduct | None = None
    A: TrigPoly = field(default_factory=TrigPoly.empty)
    fit: FitReport | None = None
    diagnostics: dict = field(default_factory=dict)
    # block structure of A: term t is (s_idx[t], q_idx[t]) with move u[t]
    s_idx: np.ndarray = field(default=None, repr=False)
    q_idx: np.ndarray = field(default=None, repr=False)
    u: np.ndarray = field(default=None, repr=False)
    indices: np.ndarray = field(default=None, repr=False)

    @property
    def noop(self) -> bool:
        return len(self.A) == 0

    @property
    def l(self) -> int:
        return self.witness.l if self.witness is not None else 0

    def to_dict(self):
        return {"N": self.N, "params": asdict(self.params), "k": self.k,
                "l": self.l, "noop": self.noop,
                "F": self.F.to_records(),
                "Q": self.Q.to_dict() if self.Q is not None else None,
                "witness": self.witness.to_dict() if self.witness is not None else None,
                "fit": self.fit.to_dict() if self.fit is not None else None,
                "terms": len(self.A), "diagnostics": self.diagnostics}


@dataclass
class RepresentationState:
    spectrum: PerturbedSpectrum
    target: Target
    profile: ShiftProfile = DEFAULT_PROFILE
    config: RepresenterConfig = field(default_factory=RepresenterConfig)
    stages: list = field(default_factory=list)

    @property
    def completed(self) -> int:
        return len(self.stages)

    def prev_k(self) -> int:
        return max((st.k for st in self.stages), default=0)

    def to_dict(self):
        return {"spectrum": self.spectrum.to_dict(), "profile": self.profile.to_dict(),
                "target": {"name": self.target.name, **self.target.meta},
                "config": self.config.to_dict(),
                "stages": [st.to_dict() for st in self.stages]}


# ---------------------------------------------------------------- parameters

def choose_parameters(F: TrigPoly, N: int, prev_k: int,
                      schedule: Schedule = Schedule()) -> Parameters | None:
    """Stage targets and the lower bounds ``k`` must exceed; ``None`` when
    ``F`` is empty (the stage adds nothing)."""
    if len(F) == 0:
        return None
    norm1, _, degF = coeff_norms(F)
    return Parameters(N=N, eta=schedule.eta(N), mu=schedule.mu(N), eps=schedule.eps(N),
                      delta=schedule.delta(N, norm1), D_max=schedule.D_max(N),
                      k_min_constraints={"prev_k": prev_k, "3degF": 3 * degF})


def resolve_k(params: Parameters, Q: TrigPoly) -> tuple[int, dict]:
    """Smallest integer ``k >= 2`` strictly above every constraint, including
    ``||Q^||_1 / delta`` and ``deg Q``."""
    q1, _, dQ = coeff_norms(Q)
    cons = dict(params.k_min_constraints)
    cons["Q1/delta"] = q1 / params.delta
    cons["degQ"] = dQ
    k = max(2, max(math.floor(v) + 1 for v in cons.values()))
    return k, cons


def _odd_at_least(v: int) -> int:
    return v if v % 2 else v + 1


# ---------------------------------------------------------------- block evaluation

def _taylor_order(rho: float) -> tuple[int, float]:
    """Smallest ``M >= 1`` with ``rho**(M+1)/(M+1)! <= 2**-60``, and that bound."""
    M, term = 1, rho * rho / 2
    while term > _TAYLOR_REL and M < 40:
        M += 1
        term *= rho / (M + 1)
    return M, term


def block_values(st: StageRecord, grid: Grid, mask: np.ndarray | None = None,
                 moved: bool = True) -> np.ndarray:
    """Values of the block (``A`` when ``moved``, else ``H``) at every grid
    node, optionally restricted to the terms selected by ``mask``."""
    m = grid.count
    if st.noop:
        return np.zeros(m, dtype=complex)
    H = st.H.product
    sel = np.ones(len(H), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not sel.any():
        return np.zeros(m, dtype=complex)
    b = H.c[sel]
    s, q = st.s_idx[sel], st.q_idx[sel]
    u = st.u[sel] if moved else np.zeros(len(b))
    e = grid.exponent
    nfft = 1 << (e + 1)
    a = grid.integer_nodes()
    t = ((st.l % nfft) * (a % nfft)) % nfft
    F = st.F
    G = exponential_matrix(F.frequencies, grid)          # (m, |F|)
    x = grid.nodes()
    rho = float(np.abs(u).max()) * float(np.abs(x).max())
    M, _ = _taylor_order(rho) if rho > 0 else (0, 0.0)
    col = (np.asarray(st.Q.poly.n)[s] % nfft).astype(np.int64)
    out = np.zeros(m, dtype=complex)
    xpow = np.ones(m, dtype=complex)
    for order in range(M + 1):
        C = np.zeros((len(F), nfft), dtype=complex)
        np.add.at(C, (q, col), b * u ** order)
        V = np.fft.ifft(C, axis=1) * nfft                  # V[q, t] = sum_s C e^{2 pi i s t / nfft}
        out += xpow * np.einsum("jq,qj->j", G, V[:, t])
        xpow = xpow * (1j * x) / (order + 1)
    return out


def modulator_values(st: StageRecord, grid: Grid) -> np.ndarray:
    """``Q(l x)`` at the grid nodes, from one FFT."""
    nfft = 1 << (grid.exponent + 1)
    C = np.zeros(nfft, dtype=complex)
    np.add.at(C, np.asarray(st.Q.poly.n) % nfft, st.Q.poly.c)
    V = np.fft.ifft(C) * nfft
    a = grid.integer_nodes()
    return V[((st.l % nfft) * (a % nfft)) % nfft]


def evaluate_S(state: RepresentationState, N: int, grid: Grid) -> GridFunction:
    """``S_N = A_1 + ... + A_N`` on the grid, accumulated in stage order."""
    if N > state.completed:
        raise PreconditionError(f"only {state.completed} stages are complete")
    out = np.zeros(grid.count, dtype=complex)
    for st in state.stages[:N]:
        out = out + block_values(st, grid)
    return GridFunction(grid, out)


def stage_grid_for(state: RepresentationState, N: int) -> Grid:
    D = state.config.schedule.D_max(N)
    g = stage_grid(N, D)
    p = max(state.config.grid_log2, g.exponent)
    return Grid(Fraction(N), Fraction(1, 2 ** p))


def diag_grid_for(state: RepresentationState, N: int) -> Grid:
    return Grid(Fraction(N), Fraction(1, 2 ** state.config.diag_log2))


# ---------------------------------------------------------------- one stage

def _transplant(spec: PerturbedSpectrum, B: BlockProduct, l: int, profile: ShiftProfile):
    """Index data and the moved polynomial for every term of ``B.product``."""
    H = B.product
    Q, F = B.modulator, B.base
    if len(H) != len(Q) * len(F):
        raise AssertionError("special product lost terms")
    # product terms are block-ordered: s-major, then the terms of F in order
    nF = len(F)
    s_idx = np.repeat(np.arange(len(Q)), nF)
    q_idx = np.tile(np.arange(nF), len(Q))
    s_val = Q.n[s_idx].astype(object)
    q_val = F.n[q_idx]
    if not np.array_equal(F.off, profile(F.n)):
        raise AssertionError("fitted frequencies are not q + sigma(q)")
    idx = s_val * l + q_val.astype(object)
    if max(abs(int(idx.min())), abs(int(idx.max()))) >= _INT_LIMIT:
        raise AlgorithmFailure("block indices overflow 62-bit integers", {"l": l})
    idx = idx.astype(np.int64)
    r = spec.r(idx)
    u = r - F.off[q_idx]                 # exact: both near sigma(q)
    lam_n, lam_off = spec.lam_arrays(idx)
    # sanity: the term order of H matches the order of lambda
    A = TrigPoly(lam_n, lam_off, H.c.copy())
    if not np.array_equal(A.c, H.c):
        raise AssertionError("transplant reordered the block")
    return A, s_idx, q_idx, u, idx


def run_stage(state: RepresentationState, N: int | None = None) -> StageRecord:
    """Run stage ``N`` (default: the next one) and commit it to ``state``.

    Raises :class:`AlgorithmFailure` or :class:`PreconditionError` with the
    state untouched when a fit (strict schedules), the correction, or the
    witness fails.
    """
    N = state.completed + 1 if N is None else N
    if N != state.completed + 1:
        raise PreconditionError(f"stage {N} requested after {state.completed} completed stages")
    cfg, sched, profile = state.config, state.config.schedule, state.profile
    grid = stage_grid_for(state, N)
    R = state.target.on(grid) - evaluate_S(state, N - 1, grid)

    eta, mu = sched.eta(N), sched.mu(N)
    F, rep = fit_in_measure(R, eta, mu, profile, sched.D_max(N), cfg.fit,
                            strict=sched.strict_fit)
    params = choose_parameters(F, N, state.prev_k(), sched)
    if params is None:
        st = StageRecord(N, F, Parameters(N, eta, mu, sched.eps(N), 0.0, sched.D_max(N), {}),
                         k=state.prev_k(), fit=rep)
        st.diagnostics = _noop_diagnostics(R, eta)
        state.stages.append(st)
        return st

    Qc = build_correction(params.eps, params.delta, cfg.correction,
                          degree_budget=cfg.correction_budget,
                          oversample=cfg.correction_oversample)
    k, cons = resolve_k(params, Qc.poly)
    spec = state.spectrum.copy()
    if cfg.witness_mode == "plant":
        l = _odd_at_least(max(2 * k - 1, spec.planted_extent() + k,
                              math.floor(2 * F.degree()) + 1))
        w = plant_witness(spec, k, l, profile, jitter=cfg.jitter_fraction / k ** 2)
    elif cfg.witness_mode == "scan":
        l0 = max(2 * k - 1, math.floor(2 * F.degree()) + 1)
        found = scan_l(spec, k, l0, l0 + cfg.scan_span, profile,
                       exclusion=spec.planted_extent())
        if found is None:
            raise AlgorithmFailure("no witness in scan range", {"k": k, "l_min": l0})
        from .spectrum import _FoundWitness
        w = _FoundWitness(k, found, profile, 1.0 / k ** 2, 0.0)
        spec.witnesses.append(w)
    else:
        raise ValueError(f"unknown witness mode {cfg.witness_mode!r}")
    if w.M >= _INT_LIMIT:
        raise AlgorithmFailure("block extent overflows 62-bit integers", {"k": k, "l": w.l})

    B = special_product(Qc.poly, F, w.l)
    A, s_idx, q_idx, u, idx = _transplant(spec, B, w.l, profile)
    st = StageRecord(N, F, params, Qc, k, w, B, A, rep, {}, s_idx, q_idx, u, idx)
    st.diagnostics = _diagnostics(state, st, grid, R, cons)
    state.spectrum = spec
    state.stages.append(st)
    return st


def _noop_diagnostics(R: GridFunction, eta: float) -> dict:
    bad = grid_measure(np.abs(R.samples) > eta, R.grid)
    return {"noop": True, "bad_measure_RN": bad, "threshold_RN": eta,
            "A_majorant_sup": 0.0, "A_coeff_norm1": 0.0, "A_minus_H_sup": 0.0,
            "H_minus_F_bad_measure": 0.0}


def _diagnostics(state, st: StageRecord, grid: Grid, R: GridFunction, cons: dict) -> dict:
    N, p, F = st.N, st.params, st.F
    h = grid.step
    Fv = evaluate(F, grid)
    Hv = Fv * modulator_values(st, grid)
    Av = block_values(st, grid)
    F1, _, _ = coeff_norms(F)
    H1 = float(st.H.norm1_factored())
    jitter = st.witness.jitter
    Nx = float(np.abs(grid.nodes()).max())
    u_max = float(np.abs(st.u).max())
    tau = p.eta + p.delta * F1 + H1 * jitter * Nx

    diag = {"noop": False, "grid_points": grid.count, "grid_step": h,
            "k_constraints": cons, "l": st.l, "M": st.witness.M,
            "terms": len(st.A), "jitter": jitter, "u_max": u_max,
            "witness_holds": bool(u_max < st.witness.tolerance)}

    hf = np.abs(Hv - Fv) > p.eta
    diag["H_minus_F_bad_measure"] = grid_measure(hf, grid)
    diag["H_minus_F_bad_bound"] = N * st.Q.certificate.bad_measure

    diag["A_minus_H_sup"] = float(np.abs(Av - Hv).max())
    diag["A_minus_H_bound"] = H1 * jitter * Nx
    diag["A_minus_H_bound_realized"] = H1 * u_max * Nx

    Qp = st.Q.poly
    diag["H_factorization_ok"] = bool(np.array_equal(
        st.H.product.c, _cmul(Qp.c[st.s_idx], F.c[st.q_idx])))
    diag["A_coeff_norm1"] = math.fsum(np.abs(st.A.c))
    diag["H_coeff_norm1"] = math.fsum(np.abs(st.H.product.c))
    diag["F_coeff_norm1"] = F1
    diag["Q_coeff_norm1"] = coeff_norms(st.Q.poly)[0]
    diag["A_coeff_norm1_bound"] = st.k * F1 * p.delta
    diag["A_coeff_norm1_rate"] = st.k / N ** 4

    exceed = np.abs(R.samples - Av) > tau
    diag["threshold_RN"] = tau
    diag["bad_measure_RN"] = grid_measure(exceed, grid)
    diag["bad_measure_RN_target"] = p.mu + N * st.Q.certificate.bad_measure

    dg = diag_grid_for(state, N)
    maj = majorant(st.A, dg)
    diag["A_majorant_sup"] = float(maj.max())
    diag["A_majorant_points"] = dg.count
    direct = evaluate(st.A, dg)
    diag["A_eval_check"] = float(np.abs(direct - block_values(st, dg)).max())
    diag["Q_certificate"] = st.Q.certificate.to_dict()
    diag["fit_met"] = st.fit.met
    return diag


def represent(state: RepresentationState, stages: int, on_stage=None) -> RepresentationState:
    for _ in range(stages):
        st = run_stage(state)
        if on_stage is not None:
            on_stage(st)
    return state


# ---------------------------------------------------------------- export

def export_coefficients(state: RepresentationState) -> list[dict]:
    """Records ``{n, c, lambda}`` for every nonzero coefficient, ascending in
    ``n``; ``lambda`` is given exactly as integer part plus offset."""
    out = []
    for st in state.stages:
        if st.noop:
            continue
        for n, ln, lo, c in zip(st.indices.tolist(), st.A.n.tolist(), st.A.off.tolist(),
                                st.A.c.tolist()):
            out.append({"n": n, "re": c.real, "im": c.imag,
                        "lambda_n": ln, "lambda_offset": f"{lo:.16e}"})
    out.sort(key=lambda r: r["n"])
    return out


def coefficients_csv(records: list[dict]) -> str:
    lines = ["n,re,im,lambda_n,lambda_offset"]
    lines += [f"{r['n']},{r['re']!r},{r['im']!r},{r['lambda_n']},{r['lambda_offset']}"
              for r in records]
    return "\n".join(lines) + "\n"


def read_coefficients_csv(text: str) -> list[dict]:
    rows = text.strip().splitlines()[1:]
    out = []
    for row in rows:
        n, re, im, ln, lo = row.split(",")
        out.append({"n": int(n), "re": float(re), "im": float(im),
                    "lambda_n": int(ln), "lambda_offset": lo})
    return out


def rebuild_state(d: dict, target: Target) -> RepresentationState:
    """Recreate a state from :meth:`RepresentationState.to_dict` output.

    Blocks are rebuilt from the stored ``F``, ``Q`` and witnesses; the
    spectrum is replayed witness by witness so every override is identical.
    """
    cfg = RepresenterConfig.from_dict(d["config"])
    profile = ShiftProfile.from_dict(d["profile"])
    full = PerturbedSpectrum.from_dict(d["spectrum"])
    state = RepresentationState(full, target, profile, cfg)
    for sd in d["stages"]:
        F = TrigPoly.from_records(sd["F"])
        pr = sd["params"]
        params = Parameters(pr["N"], pr["eta"], pr["mu"], pr["eps"], pr["delta"],
                            pr["D_max"], pr["k_min_constraints"])
        fit = FitReport(**sd["fit"]) if sd.get("fit") else None
        if sd["noop"]:
            st = StageRecord(sd["N"], F, params, k=sd["k"], fit=fit,
                             diagnostics=sd["diagnostics"])
            state.stages.append(st)
            continue
        Qc = CorrectionPoly.from_dict(sd["Q"])
        w = BlockWitness.from_dict(sd["witness"])
        B = special_product(Qc.poly, F, w.l)
        A, s_idx, q_idx, u, idx = _transplant(full, B, w.l, profile)
        st = StageRecord(sd["N"], F, params, Qc, sd["k"], w, B, A, fit,
                         sd["diagnostics"], s_idx, q_idx, u, idx)
        state.stages.append(st)
    return state
