import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from menshov.errors import PreconditionError
from menshov.spectrum import (DEFAULT_PROFILE, LITERAL_PROFILE, BlockWitness,
                              PerturbationLaw, PerturbedSpectrum, ShiftProfile,
                              analytic_block_probability, block_pairs,
                              check_condition, count_hits,
                              estimate_block_probability, plant_witness, sample,
                              scan_l, uniformity_pvalue)

LAW = PerturbationLaw()


def test_sample_is_deterministic_and_order_free():
    a = sample(7, LAW, 12345)
    assert a == sample(7, LAW, 12345)
    fwd = PerturbedSpectrum(7).r(np.arange(-50, 50))
    rev = PerturbedSpectrum(7).r(np.arange(49, -51, -1))[::-1]
    assert np.array_equal(fwd, rev)
    assert PerturbedSpectrum(7).r(3) == fwd[53]


def test_mean_of_r0_over_seeds():
    v = sample(np.arange(10 ** 6), LAW, 0)
    assert abs(v.mean()) <= 3 * 0.5 / np.sqrt(3e6)


def test_uniformity_chi_square():
    assert uniformity_pvalue(sample(np.arange(10 ** 6), LAW, 0), 0.5) > 1e-3
    assert uniformity_pvalue(PerturbedSpectrum(99).r(np.arange(10 ** 6)), 0.5) > 1e-3


def test_support_and_power_law():
    law = PerturbationLaw("power", 0.5, 1.0)
    n = np.arange(-1000, 1000)
    r = PerturbedSpectrum(1, law).r(n)
    assert np.all(np.abs(r) < law.half_width(n))
    assert np.all(np.diff(law.half_width(np.arange(0, 100))) <= 0)
    with pytest.raises(ValueError):
        PerturbationLaw("constant", 0.7)


def test_lambda_strictly_increasing():
    spec = PerturbedSpectrum(5)
    n = np.arange(-20000, 20000)
    ip, off = spec.lam_arrays(n)
    keys = list(zip(ip.tolist(), off.tolist()))
    assert all(a < b for a, b in zip(keys, keys[1:]))


def test_check_condition_exact_plants():
    k, l = 3, 40
    s, q = block_pairs(k)
    plants = {int(a * l + b): float(DEFAULT_PROFILE(b)) for a, b in zip(s, q)}
    spec = PerturbedSpectrum(0, plants=plants)
    rep = check_condition(spec, k, l)
    assert rep.holds and rep.violations == [] and rep.max_deviation == 0
    plants[1 * l + 2] = float(DEFAULT_PROFILE(2)) + 2 / k ** 2
    bad = check_condition(PerturbedSpectrum(0, plants=plants), k, l)
    assert not bad.holds and bad.violations == [(1, 2)]


def test_check_condition_random_matches_scan():
    spec = PerturbedSpectrum(123)
    k, l = 5, 1000
    rep = check_condition(spec, k, l)
    s, q = block_pairs(k)
    direct = sum(abs(spec.r(int(a * l + b)) - DEFAULT_PROFILE(b)) >= 1 / k ** 2
                 for a, b in zip(s, q))
    assert not rep.holds and len(rep.violations) == direct


def test_plant_then_check_and_scan():
    spec = PerturbedSpectrum(3)
    plant_witness(spec, 3, 37)
    assert check_condition(spec, 3, 37).holds
    assert scan_l(spec, 3, 1, 10 ** 4) == 37
    assert scan_l(spec, 3, 1, 36) is None


def test_plant_refuses_overlap():
    spec = PerturbedSpectrum(3)
    plant_witness(spec, 3, 100)
    with pytest.raises(PreconditionError):
        plant_witness(spec, 4, 90)
    plant_witness(spec, 4, 3 * 100 + 3 + 4)


def test_plant_refuses_out_of_support_and_short_l():
    with pytest.raises(PreconditionError):
        plant_witness(PerturbedSpectrum(0), 2, 50, LITERAL_PROFILE)
    with pytest.raises(PreconditionError):
        plant_witness(PerturbedSpectrum(0), 4, 6)


def test_plant_leaves_other_indices_alone():
    spec = PerturbedSpectrum(11)
    w = plant_witness(spec, 4, 500)
    n = np.arange(-3000, 3000)
    inside = np.isin(n, w.indices())
    assert np.array_equal(spec.r(n)[~inside], PerturbedSpectrum(11).r(n)[~inside])
    assert not np.array_equal(spec.r(n)[inside], PerturbedSpectrum(11).r(n)[inside])


def test_scan_respects_exclusion():
    spec = PerturbedSpectrum(3)
    plant_witness(spec, 2, 40)
    assert scan_l(spec, 2, 1, 100) <= 40
    found = scan_l(spec, 2, 1, 1000, exclusion=40)
    assert found is None or found - 2 + 1 > 40
    assert check_condition(spec, 2, found).holds


def test_block_probability_default_profile():
    assert analytic_block_probability(2) == 1 / 64
    est = estimate_block_probability(2, trials=10 ** 6, seed=7)
    assert abs(est.p_hat - 1 / 64) <= 3 * est.stderr
    assert est.ci_low <= 1 / 64 <= est.ci_high


def test_block_probability_literal_profile_and_zero_tolerance():
    assert analytic_block_probability(2, LITERAL_PROFILE) == 0
    assert estimate_block_probability(2, LITERAL_PROFILE, trials=10 ** 5).p_hat == 0
    assert analytic_block_probability(3, tol=0.0) == 0
    assert estimate_block_probability(3, tol=0.0, trials=1000).p_hat == 0


def test_scan_hit_counts_match_block_probability():
    # mean number of l in [3, L] meeting the condition is (L - 2) / 64
    L = 10 ** 5
    counts = [count_hits(PerturbedSpectrum(seed), 2, 3, L) for seed in range(20)]
    expected = (L - 2) / 64
    assert abs(np.mean(counts) - expected) < 0.05 * expected


def test_disjoint_block_events_factorize():
    seeds = 40000
    a = np.empty(seeds, bool)
    b = np.empty(seeds, bool)
    s, q = block_pairs(2)
    sig = DEFAULT_PROFILE(q)
    for i, (l, out) in enumerate([(5, a), (50, b)]):
        n = (s * l + q)[None, :]
        r = sample(np.arange(seeds)[:, None], LAW, n)
        out[:] = np.all(np.abs(r - sig) < 0.25, axis=1)
    pa, pb, pab = a.mean(), b.mean(), (a & b).mean()
    assert abs(pab - pa * pb) < 4 * np.sqrt(pa * pb / seeds)


def test_profiles():
    assert DEFAULT_PROFILE(0) == 0.25 and DEFAULT_PROFILE(-3) == 2 ** -5
    assert LITERAL_PROFILE(0) == 2 and LITERAL_PROFILE(1) == 1
    assert DEFAULT_PROFILE.problems(10, LAW, 0.01) == []
    issues = LITERAL_PROFILE.problems(3, LAW)
    assert any("increasing" in m for m in issues) and any("support" in m for m in issues)
    f = DEFAULT_PROFILE.frequency(3)
    assert (f.integer_part, f.offset) == (3, 2 ** -5)


def test_spectrum_json_round_trip():
    spec = PerturbedSpectrum(77, PerturbationLaw("power", 0.5, 0.05), plants={5: 0.125})
    plant_witness(spec, 3, 60)
    text = json.dumps(spec.to_dict())
    back = PerturbedSpectrum.from_dict(json.loads(text))
    n = np.arange(-400, 400)
    assert np.array_equal(back.r(n), spec.r(n))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 63 - 1), st.integers(2, 6), st.integers(0, 10 ** 6))
def test_witness_decode_inverts_indices(seed, k, extra):
    w = BlockWitness(k, 2 * k - 1 + extra, DEFAULT_PROFILE, 1 / k ** 2)
    s, q = block_pairs(k)
    ds, dq, inside = w.decode(w.indices())
    assert inside.all() and np.array_equal(ds, s) and np.array_equal(dq, q)
    assert w.M == k * w.l + k
    spec = PerturbedSpectrum(seed)
    plant_witness(spec, k, w.l)
    assert check_condition(spec, k, w.l).holds
