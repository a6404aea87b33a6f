from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _strategies import polys
from menshov.approximator import (FitConfig, fit_in_measure, residual,
                                  shifted_frequencies)
from menshov.errors import AlgorithmFailure
from menshov.grid import Grid, GridFunction, grid_measure, stage_grid
from menshov.spectrum import DEFAULT_PROFILE, LITERAL_PROFILE
from menshov.trigpoly import TrigPoly, evaluate

GRID = stage_grid(1, 48)


def _exp_target(q, grid=GRID, profile=DEFAULT_PROFILE):
    f = profile.frequency(q)
    P = TrigPoly([f.integer_part], [f.offset], [1.0])
    return GridFunction(grid, evaluate(P, grid))


def _step(grid):
    return GridFunction.from_callable(grid, lambda x: ((x >= 0) & (x <= 1)).astype(complex))


def test_member_of_system_is_recovered():
    F, rep = fit_in_measure(_exp_target(3), 0.25, 0.3, DEFAULT_PROFILE, 8)
    f3 = DEFAULT_PROFILE.frequency(3)
    assert abs(F.coefficient(f3) - 1) < 1e-8
    others = np.abs(F.c[(F.n != 3)])
    assert others.max() <= 1e-10
    assert rep.bad_measure == 0 and rep.met
    assert rep.norm1 > 0


def test_zero_target_gives_empty_fit():
    F, rep = fit_in_measure(GridFunction.zeros(GRID), 0.1, 0.1, DEFAULT_PROFILE, 8)
    assert len(F) == 0 and rep.bad_measure == 0 and rep.met


def test_step_fit_meets_budget_and_recount():
    target = _step(GRID)
    F, rep = fit_in_measure(target, 0.25, 0.3, DEFAULT_PROFILE, 48)
    assert rep.met and rep.bad_measure < 0.3
    # independent recount on an 8x finer grid
    fine = Grid(GRID.half_length_pi, GRID.step_pi / 8)
    err = np.abs(_step(fine).samples - evaluate(F, fine))
    recount = grid_measure(err > 0.25, fine)
    assert abs(recount - rep.bad_measure) < 0.1
    assert rep.degree_used <= 48


def test_report_fields_are_recomputed():
    target = _step(GRID)
    F, rep = fit_in_measure(target, 0.25, 0.3, DEFAULT_PROFILE, 48)
    err = np.abs(target.samples - evaluate(F, GRID))
    assert rep.bad_measure == grid_measure(err > 0.25, GRID)
    assert rep.good_sup == pytest.approx(err[err <= 0.25].max(), abs=1e-12)
    assert rep.residual_l2 == pytest.approx(np.sqrt(GRID.step * np.sum(err ** 2)), rel=1e-12)


def test_trace_is_monotone():
    _, rep = fit_in_measure(_step(GRID), 0.05, 0.05, DEFAULT_PROFILE, 24)
    bm = [b for _, b in rep.trace]
    assert all(a >= b for a, b in zip(bm, bm[1:]))
    assert not rep.met


def test_strict_unmet_raises_with_best():
    with pytest.raises(AlgorithmFailure) as exc:
        fit_in_measure(_step(GRID), 0.01, 0.01, DEFAULT_PROFILE, 6, strict=True)
    d = exc.value.details
    assert "poly" in d and d["report"]["met"] is False


def test_frequencies_are_exact_shifts():
    F, _ = fit_in_measure(_step(GRID), 0.25, 0.3, DEFAULT_PROFILE, 48)
    assert np.array_equal(F.off, DEFAULT_PROFILE(F.n))
    fs = shifted_frequencies(5, LITERAL_PROFILE)
    assert [f.value for f in fs] == sorted(f.value for f in fs)


def test_fit_is_deterministic():
    a, ra = fit_in_measure(_step(GRID), 0.25, 0.3, DEFAULT_PROFILE, 48)
    b, rb = fit_in_measure(_step(GRID), 0.25, 0.3, DEFAULT_PROFILE, 48)
    assert np.array_equal(a.c, b.c) and ra == rb


def test_bad_inputs():
    bad = GridFunction(GRID, np.full(GRID.count, np.nan))
    with pytest.raises(ValueError):
        fit_in_measure(bad, 0.1, 0.1, DEFAULT_PROFILE, 4)
    with pytest.raises(ValueError):
        fit_in_measure(_step(GRID), 0.0, 0.1, DEFAULT_PROFILE, 4)


def test_residual_identities():
    target = _step(GRID)
    assert np.array_equal(residual(target, TrigPoly.empty()).samples, target.samples)
    P = TrigPoly([1, -2], [0.1, 0.0], [0.5, 1j])
    same = GridFunction(GRID, evaluate(P, GRID))
    assert np.abs(residual(same, P).samples).max() == 0


@settings(max_examples=40, deadline=None)
@given(polys(max_terms=6, spread=10), polys(max_terms=6, spread=10))
def test_residual_matches_subtraction(T, S):
    g = Grid(Fraction(1), Fraction(1, 16))
    target = GridFunction(g, evaluate(T, g) if len(T) else np.zeros(g.count))
    x = g.nodes()
    oracle = target.samples - np.array(
        [sum(c * np.exp(1j * (n + o) * xi) for n, o, c in zip(S.n, S.off, S.c)) for xi in x])
    assert np.allclose(residual(target, S).samples, oracle, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.floats(0.05, 1.0), st.floats(0.05, 3.0))
def test_bad_measure_within_interval(N, eta, mu):
    g = stage_grid(N, 12)
    rng = np.random.default_rng(N)
    target = GridFunction(g, rng.normal(size=g.count) + 0j)
    _, rep = fit_in_measure(target, eta, mu, DEFAULT_PROFILE, 12,
                            FitConfig(rounds=1))
    assert 0 <= rep.bad_measure <= 2 * g.half_length + 1e-12
