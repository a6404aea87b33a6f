import json
from fractions import Fraction

import numpy as np
import pytest

from menshov.errors import AlgorithmFailure, PreconditionError
from menshov.grid import Grid
from menshov.representer import (RepresentationState, RepresenterConfig, Schedule,
                                 block_values, choose_parameters, coefficients_csv,
                                 evaluate_S, export_coefficients, preset_target,
                                 read_coefficients_csv, rebuild_state, represent,
                                 resolve_k, run_stage)
from menshov.spectrum import DEFAULT_PROFILE, PerturbedSpectrum
from menshov.trigpoly import TrigPoly, evaluate, window_sum

FAST = RepresenterConfig(grid_log2=10)


def _state(target="step", seed=0, config=FAST):
    return RepresentationState(PerturbedSpectrum(seed), preset_target(target), DEFAULT_PROFILE,
                               config)


@pytest.fixture(scope="module")
def step2():
    return represent(_state(), 2)


@pytest.fixture(scope="module")
def single():
    return represent(_state("single-exponential"), 1)


def test_strict_schedule_parameters():
    F = TrigPoly([0, 1], [0.0, 0.0], [1.0, 1.0])     # ||F^||_1 = 2
    p = choose_parameters(F, 2, 0, Schedule.strict())
    assert p.delta == 1 / 32 and p.eps == 1 / 8
    assert p.eta == 1 / 16 and p.mu == 1 / 4


def test_empty_fit_has_no_parameters():
    assert choose_parameters(TrigPoly.empty(), 1, 0) is None


@pytest.mark.parametrize("prev_k", [0, 5, 1000])
def test_k_exceeds_every_constraint(prev_k):
    F = TrigPoly([-3, 2], [0.0, 0.0], [0.5, 0.25])
    p = choose_parameters(F, 1, prev_k)
    Q = TrigPoly([-4, 4], [0.0, 0.0], [0.1, 0.1])
    k, cons = resolve_k(p, Q)
    assert k > prev_k and all(k > v for v in cons.values())
    assert cons["degQ"] == 4 and cons["3degF"] == 9


def test_zero_target_is_all_noops():
    st = represent(_state("zero"), 3)
    assert all(s.noop for s in st.stages)
    assert export_coefficients(st) == []
    assert st.spectrum.witnesses == []


def test_single_exponential_first_block(single):
    st = single.stages[0]
    assert not st.noop
    # spec A_1 lies on lambda(s l + q) over the witness block
    s, q, inside = st.witness.decode(st.indices)
    assert inside.all()
    lam_n, lam_off = single.spectrum.lam_arrays(st.indices)
    assert np.array_equal(lam_n, st.A.n) and np.array_equal(lam_off, st.A.off)
    F1 = np.sum(np.abs(st.F.c))
    Q1 = np.sum(np.abs(st.Q.poly.c))
    assert st.diagnostics["H_factorization_ok"]
    assert st.H.norm1_factored() == st.H.norm1_blockwise()
    assert np.isclose(st.diagnostics["A_coeff_norm1"], F1 * Q1, rtol=1e-12)


def test_block_invariants(step2):
    for st in step2.stages:
        d = st.diagnostics
        assert d["witness_holds"]
        assert d["A_coeff_norm1"] < d["A_coeff_norm1_bound"]
        assert d["A_minus_H_sup"] <= d["A_minus_H_bound"]
        assert sorted(st.A.c.tolist(), key=lambda z: (z.real, z.imag)) == \
            sorted(st.H.product.c.tolist(), key=lambda z: (z.real, z.imag))
        assert 0 not in st.Q.poly.n            # no s = 0 block
        assert st.l > 2 * st.F.degree() and st.l >= 2 * st.k - 1


def test_blocks_are_disjoint(step2):
    a, b = (set(st.indices.tolist()) for st in step2.stages)
    assert not a & b
    w1, w2 = step2.stages[0].witness, step2.stages[1].witness
    assert w2.l - w2.k + 1 > w1.M


def test_block_values_match_direct_sum(step2):
    g = Grid(Fraction(2), Fraction(1, 4))
    for st in step2.stages:
        fast = block_values(st, g)
        direct = evaluate(st.A, g)
        assert np.abs(fast - direct).max() < 1e-9 * max(1.0, np.abs(st.A.c).sum())


def test_stage_sums_telescope(step2):
    g = Grid(Fraction(2), Fraction(1, 8))
    S0 = evaluate_S(step2, 0, g).samples
    S1 = evaluate_S(step2, 1, g).samples
    S2 = evaluate_S(step2, 2, g).samples
    assert np.all(S0 == 0)
    assert np.allclose(S2 - S1, block_values(step2.stages[1], g), rtol=0, atol=1e-12)
    with pytest.raises(PreconditionError):
        evaluate_S(step2, 3, g)


def test_export_round_trip(step2):
    rec = export_coefficients(step2)
    assert len(rec) == sum(len(st.A) for st in step2.stages)
    back = read_coefficients_csv(coefficients_csv(rec))
    assert back == rec
    ns = [r["n"] for r in rec]
    assert len(set(ns)) == len(ns)
    r = step2.spectrum.r(np.array(ns))
    lam = np.array([b["lambda_n"] + float(b["lambda_offset"]) for b in back])
    assert np.allclose(lam, np.array(ns) + r, rtol=0, atol=1e-9)


def test_rebuild_state(step2):
    d = json.loads(json.dumps(step2.to_dict()))
    again = rebuild_state(d, preset_target("step"))
    for a, b in zip(step2.stages, again.stages):
        assert np.array_equal(a.A.c, b.A.c)
        assert np.array_equal(a.A.n, b.A.n) and np.array_equal(a.A.off, b.A.off)
        assert np.array_equal(a.indices, b.indices)


def test_failed_stage_leaves_state_untouched():
    cfg = RepresenterConfig(grid_log2=10, correction="minimax", correction_budget=4)
    state = _state(config=cfg)
    before = json.dumps(state.to_dict(), sort_keys=True)
    with pytest.raises(AlgorithmFailure):
        run_stage(state)
    assert state.completed == 0
    assert json.dumps(state.to_dict(), sort_keys=True) == before


def test_stage_order_enforced():
    with pytest.raises(PreconditionError):
        run_stage(_state("zero"), 2)


def test_block_window_is_partial_sum(step2):
    st = step2.stages[0]
    x = np.array([0.3, -1.1])
    lo, hi = st.A.frequencies[0], st.A.frequencies[-1]
    assert np.allclose(window_sum(st.A, lo, hi, x), evaluate(st.A, x))
