import json
import math

import numpy as np
import pytest

from menshov.correction import (CorrectionPoly, build_correction, verification_grid,
                                verify_correction)
from menshov.errors import AlgorithmFailure, PreconditionError
from menshov.trigpoly import TrigPoly, evaluate


@pytest.fixture(scope="module")
def analytic():
    return build_correction(1.0, 0.3, "analytic")


@pytest.fixture(scope="module")
def minimax():
    return build_correction(2.0, 0.45, "minimax", 64)


def test_large_eps_gives_zero_polynomial():
    C = build_correction(7.0, 0.5)
    assert len(C.poly) == 0 and C.strategy == "trivial"
    c = C.certificate
    assert (c.zero_coefficient, c.coeff_inf, c.majorant_sup, c.C_achieved) == (0, 0, 0, 0)
    assert c.bad_measure == pytest.approx(2 * math.pi) and c.bad_measure < 7


def test_zero_polynomial_is_bad_everywhere():
    c = verify_correction(TrigPoly.empty(), 1.0, 0.5)
    assert c.bad_measure == pytest.approx(2 * math.pi, abs=1e-12)
    assert c.bad_measure_uncertainty == 0


def test_two_term_read_off():
    d = 0.3
    P = TrigPoly([1, -1], [0.0, 0.0], [d / 2, d / 2])
    c = verify_correction(P, 1.0, d)
    assert c.coeff_inf == d / 2 and c.zero_coefficient == 0
    assert c.degree == 1 and c.terms == 2


def test_non_integer_spectrum_rejected():
    with pytest.raises(ValueError):
        verify_correction(TrigPoly([1], [0.25], [1.0]), 1.0, 0.5)


@pytest.mark.parametrize("eps,delta", [(0.0, 0.5), (1.0, 1.0), (1.0, 0.0)])
def test_preconditions(eps, delta):
    with pytest.raises(PreconditionError):
        build_correction(eps, delta)


def test_analytic_certificate_holds(analytic):
    eps, delta = 1.0, 0.3
    c = analytic.certificate
    assert c.holds(eps, delta)
    assert analytic.poly.coefficient(0) == 0
    assert analytic.poly.is_integer_spectrum()
    # every coefficient is below delta and |P| >= 1 - delta on the good set
    assert c.terms >= (1 - delta) / delta
    assert c.C_achieved == pytest.approx(c.majorant_sup * eps)


def test_certificate_recomputes_independently(analytic):
    c = analytic.certificate
    g = verification_grid(analytic.poly.degree(), 8)
    x = g.nodes()[:-1]
    v = evaluate(analytic.poly, x)
    bad = (2 * math.pi / len(x)) * np.count_nonzero(np.abs(v - 1) > 0.3)
    assert abs(bad - c.bad_measure) <= c.bad_measure_uncertainty + 1e-12


def test_stable_under_oversample_doubling(analytic):
    a = verify_correction(analytic.poly, 1.0, 0.3, 4)
    b = verify_correction(analytic.poly, 1.0, 0.3, 8)
    assert abs(a.bad_measure - b.bad_measure) <= a.bad_measure_uncertainty + b.bad_measure_uncertainty
    assert b.majorant_sup >= a.majorant_sup * (1 - 1e-3)
    assert b.coeff_inf == a.coeff_inf


def test_minimax_certificate_and_determinism(minimax):
    assert minimax.certificate.holds(2.0, 0.45)
    again = build_correction(2.0, 0.45, "minimax", 64)
    assert np.array_equal(again.poly.c, minimax.poly.c)
    assert np.array_equal(again.poly.n, minimax.poly.n)
    assert minimax.poly.coefficient(0) == 0
    # real even cosine: symmetric coefficients
    assert np.allclose(minimax.poly.c, minimax.poly.c[::-1], rtol=0, atol=0)


def test_minimax_requires_budget():
    with pytest.raises(PreconditionError):
        build_correction(1.0, 0.3, "minimax")


def test_minimax_failure_is_structured():
    with pytest.raises(AlgorithmFailure) as exc:
        build_correction(0.5, 0.2, "minimax", 8)
    assert exc.value.details


def test_serialization_round_trip(analytic):
    d = json.loads(analytic.to_json())
    back = CorrectionPoly.from_dict(d)
    assert np.array_equal(back.poly.c, analytic.poly.c)
    assert back.certificate == analytic.certificate


def test_coefficient_bound_respects_margin(analytic):
    assert analytic.certificate.coeff_inf <= 0.3 * (1 - 0.05) + 1e-15
