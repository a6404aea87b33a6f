"""Randomly perturbed integers ``lambda(n) = n + r(n)`` and block witnesses.

``r(n)`` is uniform on ``(-d_n, d_n)`` and comes from a counter-based
generator keyed by ``(seed, n)``: every index has its own stream, so values
do not depend on the order in which indices are queried. Witness blocks
``I(k) = {s l + q : 0 < |s| < k, |q| < k}`` can be planted, which overrides
``r`` on exactly those indices with values near a shift profile.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import PreconditionError
from .trigpoly import Frequency

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# stream ids
_SAMPLE_STREAM = 0
_PLANT_STREAM = 1 << 20


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _key(seed, stream: int):
    seed = np.asarray(seed).astype(np.int64).astype(np.uint64) if np.ndim(seed) else \
        np.uint64(int(seed) & _MASK64)
    with np.errstate(over="ignore"):
        return _mix(seed ^ _mix(np.uint64((stream * 0x632BE59BD9B4E019) & _MASK64)))


def counter_uniform(seed, n, stream: int = 0) -> np.ndarray:
    """Uniform doubles in [0, 1) as a pure function of ``(seed, n, stream)``.

    SplitMix64 output at position ``n`` of the Weyl sequence started at a
    seed-and-stream key; ``seed`` and ``n`` broadcast.
    """
    n = np.asarray(n, dtype=np.int64)
    with np.errstate(over="ignore"):
        z = _mix(_key(seed, stream) + n.astype(np.uint64) * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def _open_uniform(seed, n, stream: int) -> np.ndarray:
    """Like :func:`counter_uniform` but never 0; zeros are redrawn from the
    next stream (probability 2**-53 per draw)."""
    u = np.atleast_1d(counter_uniform(seed, n, stream))
    bad = u == 0.0
    s = stream
    while bad.any():
        s += 1
        seed_b = np.broadcast_to(seed, u.shape)[bad]
        n_b = np.broadcast_to(n, u.shape)[bad]
        u[bad] = counter_uniform(seed_b, n_b, s)
        bad = u == 0.0
    return u


# ---------------------------------------------------------------- laws and profiles

@dataclass(frozen=True)
class PerturbationLaw:
    """Half-widths ``d_n``: ``value`` for ``kind="constant"``, otherwise
    ``value * (1 + |n|) ** -exponent`` (non-increasing in ``|n|``)."""

    kind: str = "constant"
    value: float = 0.5
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "power"):
            raise ValueError(f"unknown law kind {self.kind!r}")
        if not 0.0 < self.value <= 0.5:
            raise ValueError("half width must lie in (0, 1/2]")
        if self.exponent < 0:
            raise ValueError("exponent must be non-negative")

    def half_width(self, n):
        n = np.asarray(n)
        if self.kind == "constant":
            return np.full(n.shape, self.value) if n.ndim else self.value
        return self.value * (1.0 + np.abs(n)) ** (-self.exponent)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.exponent == 0.0

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ShiftProfile:
    """Shifts ``sigma(q) = scale * ratio ** |q|`` attached to integers ``q``."""

    name: str
    scale: float
    ratio: float

    def __call__(self, q):
        return self.scale * self.ratio ** np.abs(np.asarray(q, dtype=float))

    def frequency(self, q: int) -> Frequency:
        return Frequency(int(q), float(self(q)))

    def problems(self, k: int, law: PerturbationLaw | None = None,
                 tolerance: float = 0.0) -> list[str]:
        """Violations of positivity, decay, monotonicity of ``q + sigma(q)``
        on ``|q| < k``, and (with a law) support compatibility."""
        out = []
        if not (self.scale > 0 and 0 < self.ratio < 1):
            out.append("sigma must be positive and decay to zero")
        qs = np.arange(-(k - 1), k)
        freqs = [self.frequency(q) for q in qs]
        if any(not a < b for a, b in zip(freqs, freqs[1:])):
            out.append("q + sigma(q) is not strictly increasing")
        if law is not None:
            d = law.value
            if np.any(self(qs) + tolerance > d):
                out.append("sigma(q) + tolerance exceeds the perturbation support")
        return out

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "ShiftProfile":
        return cls(d["name"], float(d["scale"]), float(d["ratio"]))


DEFAULT_PROFILE = ShiftProfile("default", 0.25, 0.5)   # 2**(-|q|-2)
LITERAL_PROFILE = ShiftProfile("literal", 2.0, 0.5)        # 2**(-|q|+1)
PROFILES = {"default": DEFAULT_PROFILE, "literal": LITERAL_PROFILE}


def load_profile(spec: str) -> ShiftProfile:
    """``default``, ``literal``, or a path to a JSON file with
    ``{name, scale, ratio}``."""
    if spec in PROFILES:
        return PROFILES[spec]
    with open(spec) as fh:
        return ShiftProfile.from_dict(json.load(fh))


# ---------------------------------------------------------------- block sets

def block_pairs(k: int) -> tuple[np.ndarray, np.ndarray]:
    """All ``(s, q)`` with ``0 < |s| < k`` and ``|q| < k``, s-major order."""
    s = np.concatenate([np.arange(-(k - 1), 0), np.arange(1, k)])
    q = np.arange(-(k - 1), k)
    S, Q = np.meshgrid(s, q, indexing="ij")
    return S.ravel(), Q.ravel()


def block_extent(k: int, l: int) -> int:
    """``M(k) = k l + k``."""
    return k * l + k


@dataclass(frozen=True)
class BlockWitness:
    """A planted or found block: ``|r(s l + q) - sigma(q)| < tolerance`` on
    every index of ``I(k)``."""

    k: int
    l: int
    profile: ShiftProfile
    tolerance: float
    jitter: float = 0.0

    @property
    def M(self) -> int:
        return block_extent(self.k, self.l)

    @property
    def size(self) -> int:
        return (2 * self.k - 2) * (2 * self.k - 1)

    def indices(self) -> np.ndarray:
        s, q = block_pairs(self.k)
        return s * self.l + q

    def decode(self, n):
        """``(s, q, inside)`` for indices ``n``; needs ``l >= 2k - 1``."""
        n = np.asarray(n, dtype=np.int64)
        k, l = self.k, self.l
        s = np.floor_divide(n + (k - 1), l)
        q = n - s * l
        inside = (s != 0) & (np.abs(s) < k) & (np.abs(q) < k)
        return s, q, inside

    def to_dict(self):
        return {"k": self.k, "l": self.l, "tolerance": self.tolerance,
                "jitter": self.jitter, "profile_name": self.profile.name,
                "profile": self.profile.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "BlockWitness":
        prof = ShiftProfile.from_dict(d["profile"]) if "profile" in d else PROFILES[d["profile_name"]]
        kind = _FoundWitness if d.get("found") else BlockWitness
        return kind(int(d["k"]), int(d["l"]), prof, float(d["tolerance"]),
                    float(d.get("jitter", 0.0)))


# ---------------------------------------------------------------- the spectrum

def sample(seed: int, law: PerturbationLaw, n):
    """``r(n)`` uniform on ``(-d_n, d_n)``, reproducible per ``(seed, n)``."""
    scalar = np.ndim(n) == 0 and np.ndim(seed) == 0
    n, seed = np.broadcast_arrays(np.asarray(n, dtype=np.int64), np.asarray(seed))
    n = np.atleast_1d(n)
    seed = np.atleast_1d(seed) if seed.ndim else int(seed)
    u = _open_uniform(seed, n, _SAMPLE_STREAM)
    r = law.half_width(n) * (2.0 * u - 1.0)
    return float(r[0]) if scalar else r


@dataclass
class PerturbedSpectrum:
    """The sequence ``lambda(n) = n + r(n)`` with lazy generation.

    Overrides come from ``plants`` (explicit ``n -> r``) and then from the
    planted ``witnesses`` in order; everything else is sampled.
    """

    seed: int
    law: PerturbationLaw = field(default_factory=PerturbationLaw)
    plants: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)

    def r(self, n):
        scalar = np.ndim(n) == 0
        n = np.atleast_1d(np.asarray(n, dtype=np.int64))
        out = sample(self.seed, self.law, n)
        for w in self.witnesses:
            s, q, inside = w.decode(n)
            if inside.any():
                out[inside] = self._planted_values(w, n[inside], q[inside])
        if self.plants:
            for i, v in enumerate(n.tolist()):
                if v in self.plants:
                    out[i] = self.plants[v]
        return float(out[0]) if scalar else out

    def _planted_values(self, w: BlockWitness, n, q):
        u = _open_uniform(self.seed, n, _PLANT_STREAM + self.witnesses.index(w))
        return w.profile(q) + w.jitter * (2.0 * u - 1.0)

    def lam(self, n) -> Frequency:
        return Frequency(int(n), self.r(int(n)))

    def lam_arrays(self, n) -> tuple[np.ndarray, np.ndarray]:
        """Canonical ``(integer_part, offset)`` arrays of ``lambda(n)``."""
        n = np.asarray(n, dtype=np.int64)
        r = self.r(n)
        s = np.ceil(r - 0.5).astype(np.int64)
        return n + s, r - s

    def planted_extent(self) -> int:
        """Largest ``M`` among planted witnesses (0 if none)."""
        return max((w.M for w in self.witnesses), default=0)

    def copy(self) -> "PerturbedSpectrum":
        return PerturbedSpectrum(self.seed, self.law, dict(self.plants), list(self.witnesses))

    def to_dict(self):
        return {"seed": self.seed, "law": self.law.to_dict(),
                "plants": [{"n": int(n), "r": repr(float(r))} for n, r in sorted(self.plants.items())],
                "witnesses": [w.to_dict() for w in self.witnesses]}

    @classmethod
    def from_dict(cls, d) -> "PerturbedSpectrum":
        return cls(int(d["seed"]), PerturbationLaw(**d["law"]),
                   {int(p["n"]): float(p["r"]) for p in d.get("plants", [])},
                   [BlockWitness.from_dict(w) for w in d.get("witnesses", [])])


# ---------------------------------------------------------------- conditions

@dataclass
class ConditionReport:
    holds: bool
    violations: list  # (s, q) pairs
    max_deviation: float


def check_condition(spec: PerturbedSpectrum, k: int, l: int,
                    profile: ShiftProfile = DEFAULT_PROFILE,
                    tol: float | None = None) -> ConditionReport:
    """Test ``|r(s l + q) - sigma(q)| < tol`` for all ``0<|s|<k, |q|<k``."""
    if k < 2 or l < 1:
        raise ValueError("need k >= 2 and l >= 1")
    tol = 1.0 / k ** 2 if tol is None else tol
    s, q = block_pairs(k)
    dev = np.abs(spec.r(s * l + q) - profile(q))
    bad = dev >= tol
    return ConditionReport(not bad.any(),
                           [(int(a), int(b)) for a, b in zip(s[bad], q[bad])],
                           float(dev.max()))


def _condition_mask(spec, k, ls, profile, tol):
    s, q = block_pairs(k)
    sig = profile(q)
    ok = np.ones(len(ls), dtype=bool)
    # cheap pairs first; most l fail on the first few indices
    for si, qi, sg in zip(s, q, sig):
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            break
        r = spec.r(ls[idx] * si + qi)
        ok[idx] = np.abs(r - sg) < tol
    return ok


def scan_l(spec: PerturbedSpectrum, k: int, l_min: int, l_max: int,
           profile: ShiftProfile = DEFAULT_PROFILE, exclusion: int = 0,
           tol: float | None = None, chunk: int = 1 << 16):
    """Smallest ``l`` in ``[l_min, l_max]`` satisfying the block condition with
    ``l - k + 1 > exclusion``; ``None`` if there is none."""
    if l_min < 1:
        raise ValueError("l_min must be positive")
    tol = 1.0 / k ** 2 if tol is None else tol
    start = max(l_min, exclusion + k)
    for lo in range(start, l_max + 1, chunk):
        ls = np.arange(lo, min(l_max, lo + chunk - 1) + 1, dtype=np.int64)
        hit = np.flatnonzero(_condition_mask(spec, k, ls, profile, tol))
        if hit.size:
            return int(ls[hit[0]])
    return None


def count_hits(spec: PerturbedSpectrum, k: int, l_min: int, l_max: int,
               profile: ShiftProfile = DEFAULT_PROFILE, tol: float | None = None,
               chunk: int = 1 << 16) -> int:
    """Number of ``l`` in range for which the block condition holds."""
    tol = 1.0 / k ** 2 if tol is None else tol
    total = 0
    for lo in range(l_min, l_max + 1, chunk):
        ls = np.arange(lo, min(l_max, lo + chunk - 1) + 1, dtype=np.int64)
        total += int(_condition_mask(spec, k, ls, profile, tol).sum())
    return total


def plant_witness(spec: PerturbedSpectrum, k: int, l: int,
                  profile: ShiftProfile = DEFAULT_PROFILE,
                  jitter: float | None = None,
                  tolerance: float | None = None) -> BlockWitness:
    """Override ``r`` on ``I(k)`` with ``sigma(q) + u``, ``|u| < jitter``.

    Refuses (``PreconditionError``) when ``I(k)`` would meet the range
    ``[-M, M]`` of an earlier witness, when the block indices are not
    distinct (``l < 2k - 1``), or when shifted values leave the support.
    Mutates ``spec``; callers serialize access.
    """
    if k < 2:
        raise PreconditionError("k must be at least 2")
    tolerance = 1.0 / k ** 2 if tolerance is None else tolerance
    jitter = tolerance if jitter is None else jitter
    if not 0 <= jitter <= tolerance:
        raise PreconditionError("jitter must lie in [0, tolerance]")
    if l < 2 * k - 1:
        raise PreconditionError(f"l = {l} < 2k - 1: block indices would repeat")
    prior = spec.planted_extent()
    if l - k + 1 <= prior:
        raise PreconditionError(
            f"I({k}) at l={l} meets [-M, M] of an earlier witness (M={prior})")
    # d_n is non-increasing in |n|, so for each q the outermost index s = +-(k-1)
    # is the binding one; the block itself is never materialized
    q = np.arange(-(k - 1), k)
    d = spec.law.half_width((k - 1) * l + np.abs(q))
    if np.any(profile(q) + jitter > d) or np.any(profile(q) - jitter < -d):
        raise PreconditionError("shift profile plus jitter leaves the perturbation support")
    w = BlockWitness(k, l, profile, tolerance, jitter)
    if spec.plants:
        _, _, inside = w.decode(np.fromiter(spec.plants.keys(), dtype=np.int64))
        if inside.any():
            raise PreconditionError("block meets explicitly planted indices")
    spec.witnesses.append(w)
    return w


def find_or_plant(spec: PerturbedSpectrum, k: int, l_min: int,
                  profile: ShiftProfile = DEFAULT_PROFILE, mode: str = "plant",
                  l_max: int | None = None, jitter: float | None = None) -> BlockWitness:
    """Witness acquisition for the representation pipeline: ``l`` starts at
    the first admissible value beyond all earlier blocks."""
    l0 = max(l_min, 2 * k - 1, spec.planted_extent() + k)
    if mode == "plant":
        return plant_witness(spec, k, l0, profile, jitter)
    if mode == "scan":
        found = scan_l(spec, k, l0, l_max or l0 * 1000, profile,
                       exclusion=spec.planted_extent())
        if found is None:
            from .errors import AlgorithmFailure
            raise AlgorithmFailure("no witness in scan range",
                                   {"k": k, "l_min": l0, "l_max": l_max})
        w = BlockWitness(k, found, profile, 1.0 / k ** 2, 0.0)
        # record the block so later blocks respect its extent; values stay sampled
        spec.witnesses.append(_FoundWitness(k, found, profile, 1.0 / k ** 2, 0.0))
        return w
    raise ValueError(f"unknown witness mode {mode!r}")


@dataclass(frozen=True)
class _FoundWitness(BlockWitness):
    """A block discovered by scanning: it constrains later extents but does
    not override any values."""

    def decode(self, n):
        s, q, inside = super().decode(n)
        return s, q, np.zeros_like(inside)

    def to_dict(self):
        return {**super().to_dict(), "found": True}


# ---------------------------------------------------------------- probability

@dataclass
class ProbabilityEstimate:
    p_hat: float
    stderr: float
    ci_low: float
    ci_high: float
    trials: int
    analytic: float

    def to_dict(self):
        return asdict(self)


def analytic_block_probability(k: int, profile: ShiftProfile = DEFAULT_PROFILE,
                               law: PerturbationLaw = PerturbationLaw(),
                               tol: float | None = None, l: int | None = None) -> float:
    """Product over the block of ``|(sigma-tol, sigma+tol) & [-d, d]| / (2d)``."""
    tol = 1.0 / k ** 2 if tol is None else tol
    s, q = block_pairs(k)
    if l is None:
        if not law.is_constant:
            raise ValueError("non-constant law needs a concrete l")
        d = np.full(len(q), law.value)
    else:
        d = law.half_width(s * l + q)
    sig = profile(q)
    overlap = np.clip(np.minimum(sig + tol, d) - np.maximum(sig - tol, -d), 0.0, None)
    return float(np.prod(overlap / (2 * d)))


def estimate_block_probability(k: int, profile: ShiftProfile = DEFAULT_PROFILE,
                               law: PerturbationLaw = PerturbationLaw(),
                               trials: int = 100_000, seed: int = 0,
                               tol: float | None = None, z: float = 3.0,
                               chunk: int = 1 << 17) -> ProbabilityEstimate:
    """Monte Carlo frequency of the block condition on fresh uniform draws.

    The confidence interval is Wilson's score interval at ``z`` standard
    errors.
    """
    if k < 2 or trials < 1:
        raise ValueError("need k >= 2 and trials >= 1")
    if not law.is_constant:
        raise ValueError("block probability estimation needs a constant law")
    tol = 1.0 / k ** 2 if tol is None else tol
    _, q = block_pairs(k)
    sig = profile(q)
    d = law.value
    rng = np.random.Generator(np.random.PCG64(seed))
    hits = 0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        r = rng.uniform(-d, d, size=(m, len(q)))
        hits += int(np.all(np.abs(r - sig) < tol, axis=1).sum())
        done += m
    p = hits / trials
    se = math.sqrt(p * (1 - p) / trials)
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return ProbabilityEstimate(p, se, max(0.0, centre - half), min(1.0, centre + half),
                               trials, analytic_block_probability(k, profile, law, tol))


def uniformity_pvalue(values: np.ndarray, half_width: float, bins: int = 100) -> float:
    """Chi-square goodness-of-fit p-value against uniform on the support."""
    counts, _ = np.histogram(values, bins=bins, range=(-half_width, half_width))
    return float(stats.chisquare(counts).pvalue)
