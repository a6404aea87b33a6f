"""Shared random generators and hypothesis strategies for the test suite."""

import numpy as np
from hypothesis import strategies as st

from menshov.trigpoly import TrigPoly


def random_poly(rng, terms, spread=20, integer=False, scale=1.0):
    n = rng.integers(-spread, spread + 1, size=terms)
    off = np.zeros(terms) if integer else rng.uniform(-0.5, 0.5, size=terms)
    c = scale * (rng.normal(size=terms) + 1j * rng.normal(size=terms)) / np.sqrt(2)
    return TrigPoly(n, off, c)


coef = st.complex_numbers(max_magnitude=3.0, allow_nan=False, allow_infinity=False)
offsets = st.floats(-0.49, 0.5, allow_nan=False)


@st.composite
def polys(draw, max_terms=12, spread=30, integer=False):
    k = draw(st.integers(0, max_terms))
    ns = draw(st.lists(st.integers(-spread, spread), min_size=k, max_size=k))
    offs = [0.0] * k if integer else draw(st.lists(offsets, min_size=k, max_size=k))
    cs = draw(st.lists(coef, min_size=k, max_size=k))
    return TrigPoly(ns, offs, cs)


points = st.floats(-50.0, 50.0, allow_nan=False)
