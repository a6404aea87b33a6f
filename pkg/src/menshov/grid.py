"""Uniform grids on symmetric intervals whose nodes are dyadic multiples of pi.

Node coordinates are kept as exact integers over a power-of-two denominator,
so phases ``n * x`` for huge integer frequencies ``n`` reduce modulo ``2*pi``
without rounding.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

MAX_EXPONENT = 30


def _dyadic(value) -> Fraction:
    f = Fraction(value)
    den = f.denominator
    if den & (den - 1):
        raise ValueError(f"{value!r} is not a dyadic rational")
    return f


@dataclass(frozen=True)
class Grid:
    """Nodes ``x_j = pi * (-half_length_pi + j * step_pi)``, ``j = 0..count-1``.

    Both parameters are dyadic rationals; ``count = floor(2L/h) + 1``.
    """

    half_length_pi: Fraction
    step_pi: Fraction

    def __post_init__(self):
        object.__setattr__(self, "half_length_pi", _dyadic(self.half_length_pi))
        object.__setattr__(self, "step_pi", _dyadic(self.step_pi))
        if self.step_pi <= 0 or self.half_length_pi < 0:
            raise ValueError("grid needs step > 0 and half length >= 0")
        if self.exponent > MAX_EXPONENT:
            raise ValueError(f"grid denominator exceeds 2**{MAX_EXPONENT}")

    @classmethod
    def symmetric(cls, half_length_pi, step_pi) -> "Grid":
        return cls(Fraction(half_length_pi), Fraction(step_pi))

    @classmethod
    def periodic(cls, points_log2: int) -> "Grid":
        """``2**points_log2 + 1`` nodes on [-pi, pi]; drop the last one for a
        periodic sample."""
        return cls(Fraction(1), Fraction(2, 2 ** points_log2))

    @property
    def exponent(self) -> int:
        den = max(self.half_length_pi.denominator, self.step_pi.denominator)
        return den.bit_length() - 1

    @property
    def half_length(self) -> float:
        return float(self.half_length_pi) * math.pi

    @property
    def step(self) -> float:
        return float(self.step_pi) * math.pi

    @property
    def count(self) -> int:
        return int(2 * self.half_length_pi // self.step_pi) + 1

    def integer_nodes(self) -> np.ndarray:
        """Numerators ``a_j`` with ``x_j = pi * a_j / 2**exponent``."""
        scale = 2 ** self.exponent
        a0 = int(-self.half_length_pi * scale)
        da = int(self.step_pi * scale)
        return a0 + da * np.arange(self.count, dtype=np.int64)

    def nodes(self) -> np.ndarray:
        return np.pi * (self.integer_nodes() / 2.0 ** self.exponent)

    def refine(self, factor: int = 2) -> "Grid":
        if factor & (factor - 1):
            raise ValueError("refinement factor must be a power of two")
        return Grid(self.half_length_pi, self.step_pi / factor)

    def key(self):
        return (self.half_length_pi, self.step_pi)


@dataclass
class GridFunction:
    """Complex samples of a function on a :class:`Grid`."""

    grid: Grid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.shape != (self.grid.count,):
            raise ValueError(
                f"expected {self.grid.count} samples, got {self.samples.shape}")

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        return cls(grid, np.asarray(fn(grid.nodes()), dtype=complex))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.count, dtype=complex))

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes()

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        if other.grid.key() != self.grid.key():
            raise ValueError("grid mismatch")
        return GridFunction(self.grid, self.samples - other.samples)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if other.grid.key() != self.grid.key():
            raise ValueError("grid mismatch")
        return GridFunction(self.grid, self.samples + other.samples)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "re", "im"])
        for x, v in zip(self.x, self.samples):
            w.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grid: Grid | None = None) -> "GridFunction":
        """Read ``x, re, im`` columns. Without an explicit grid, the grid is
        inferred from the first node and the spacing, which must be dyadic
        multiples of pi up to float rounding."""
        rows = list(csv.DictReader(io.StringIO(text)))
        x = np.array([float(r["x"]) for r in rows])
        v = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
        if grid is None:
            grid = infer_grid(x)
        if grid.count != len(x) or not np.allclose(grid.nodes(), x, atol=1e-9):
            raise ValueError("samples do not lie on the grid")
        return cls(grid, v)


def infer_grid(x: np.ndarray) -> Grid:
    if len(x) < 2:
        raise ValueError("need at least two nodes to infer a grid")
    half = Fraction(-x[0] / math.pi).limit_denominator(2 ** MAX_EXPONENT)
    step = Fraction((x[1] - x[0]) / math.pi).limit_denominator(2 ** MAX_EXPONENT)
    return Grid(half, step)


def stage_grid(stage: int, max_frequency: int) -> Grid:
    """Grid on [-N pi, N pi] with step ``pi / 2**p <= pi / (4 (D + 1))``."""
    p = max(2, math.ceil(math.log2(4 * (max_frequency + 1))))
    return Grid(Fraction(stage), Fraction(1, 2 ** p))


def grid_measure(mask: np.ndarray, grid: Grid) -> float:
    """Trapezoidal measure of the marked nodes: interior nodes count ``h``,
    the two end nodes ``h/2``, so an all-true mask gives ``2L`` exactly."""
    mask = np.asarray(mask, dtype=bool)
    n = int(np.count_nonzero(mask))
    if mask.size > 1:
        n2 = 2 * n - int(mask[0]) - int(mask[-1])
    else:
        n2 = 0
    return grid.step * n2 / 2


def sign_changes(v: np.ndarray, cyclic: bool = False) -> int:
    """Number of sign flips of ``v > 0`` between neighbours."""
    s = np.asarray(v) > 0
    n = int(np.count_nonzero(s[1:] != s[:-1]))
    if cyclic and len(s) > 1 and s[0] != s[-1]:
        n += 1
    return n
