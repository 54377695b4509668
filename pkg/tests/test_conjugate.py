import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from occucast.conjugate import (
    bernoulli_match_prior, digamma, inverse_digamma, poisson_match_prior, solve_trigamma, trigamma,
)
from occucast.errors import NumericalError

EULER = 0.5772156649015329


def test_trigamma_matches_scipy():
    x = np.logspace(-3, 3, 50)
    assert np.allclose(trigamma(x), special.polygamma(1, x), rtol=1e-13)


def test_poisson_unit_gamma():
    p = poisson_match_prior(-EULER, math.pi ** 2 / 6)
    assert p.alpha == pytest.approx(1.0, abs=1e-10)
    assert p.beta == pytest.approx(1.0, abs=1e-10)


def test_poisson_alpha_two():
    p = poisson_match_prior(1 - EULER, math.pi ** 2 / 6 - 1)
    assert (p.alpha, p.beta) == (pytest.approx(2.0, abs=1e-9), pytest.approx(1.0, abs=1e-9))
    assert p.mean == pytest.approx(2.0)


@given(st.floats(-20, 20), st.floats(1e-4, 10))
def test_poisson_round_trip(f, q):
    p = poisson_match_prior(f, q)
    g, v = p.log_moments()
    assert abs(g - f) < 1e-10 and abs(v - q) < 1e-10


@pytest.mark.parametrize("q", [1e-8, 1e-4, 0.5, 10.0, 1e3, 1e5])
def test_solve_trigamma_wide_range(q):
    a = solve_trigamma(q)
    assert abs(float(trigamma(a)) - q) < 1e-10 * max(1.0, q)


def test_bernoulli_symmetric():
    b = bernoulli_match_prior(0.0, 2 * math.pi ** 2 / 6)
    assert (b.alpha, b.beta) == (pytest.approx(1.0, abs=1e-8), pytest.approx(1.0, abs=1e-8))
    assert b.mean == pytest.approx(0.5)


def test_bernoulli_three_one():
    f = float(digamma(3.0) - digamma(1.0))
    q = float(trigamma(3.0) + trigamma(1.0))
    b = bernoulli_match_prior(f, q)
    assert b.alpha == pytest.approx(3.0, abs=1e-7) and b.beta == pytest.approx(1.0, abs=1e-7)
    assert b.mean == pytest.approx(0.75)


@given(st.floats(-12, 12), st.floats(1e-4, 10))
def test_bernoulli_round_trip(f, q):
    b = bernoulli_match_prior(f, q)
    g, v = b.logit_moments()
    assert abs(g - f) < 1e-8 and abs(v - q) < 1e-8


@pytest.mark.parametrize("f,q", [(168.46, 29596.2), (-150.0, 2e4), (40.0, 50.0), (0.0, 1e4)])
def test_bernoulli_near_certain_states(f, q):
    b = bernoulli_match_prior(f, q)
    g, v = b.logit_moments()
    assert abs(g - f) < 1e-8 and abs(v - q) < 1e-8 * q


def test_inverse_digamma():
    for y in (-50.0, -3.0, -0.5, 0.0, 2.0, 30.0):
        assert float(digamma(inverse_digamma(y))) == pytest.approx(y, abs=1e-12 * max(1, abs(y)))


@pytest.mark.parametrize("q", [0.0, -1.0, float("nan")])
def test_invalid_variance_rejected(q):
    with pytest.raises(NumericalError):
        poisson_match_prior(0.0, q)
    with pytest.raises(NumericalError):
        bernoulli_match_prior(0.0, q)
